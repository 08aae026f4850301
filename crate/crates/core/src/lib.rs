//! Helical Navier–Stokes flow with horizontal-only viscosity in the solid
//! cylinder `B1 x [0, 2π)`.
//!
//! A helical flow is fully described by its trace on the slice `x3 = 0`, so
//! the solver evolves a three-component velocity on a polar grid of the unit
//! disk. The crate also carries an independent coarse 3D reference solver and
//! the harness that checks energy decay, gradient bounds, interpolation
//! inequalities and stability against the discrete solutions.

pub mod checkpoint;
pub mod cli;
pub mod error;
pub mod estimates;
pub mod fields;
pub mod grid;
pub mod helix;
pub mod linalg;
pub mod oracle3d;
pub mod poly;
pub mod solver;
pub mod spectral;

pub use error::{HelixError, Result};
pub use grid::{poincare_constant, DiskGrid, WallClosure};
pub use helix::{CylinderField, HelicalTransform, Point3, SliceField, Vec3, VerticalSign};
