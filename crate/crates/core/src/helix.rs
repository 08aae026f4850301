//! Helical group action and the correspondence between helical fields on the
//! cylinder `B1 x [0, 2π)` and their trace on the slice `x3 = 0`.
//!
//! The pitch is fixed to one, so `S_θ` advances `x3` by `θ`. A helical vector
//! field satisfies `u(S_θ x) = R_θ u(x)`; taking `θ = -x3` gives
//!
//! ```text
//! u(x) = R_{x3} w(y(x)),   y(x) = R_{-x3} (x1, x2)
//! ```
//!
//! where `w` is the slice trace. In polar coordinates `y` has the angle of
//! `x` shifted by `+x3`.

use std::f64::consts::PI;
use std::ops::{Add, Mul, Sub};
use std::sync::Arc;

use crate::error::{HelixError, Result};
use crate::grid::DiskGrid;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Vec3(pub [f64; 3]);

pub type Point3 = Vec3;

impl Vec3 {
    pub const ZERO: Vec3 = Vec3([0.0; 3]);

    pub fn new(a: f64, b: f64, c: f64) -> Self {
        Vec3([a, b, c])
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    /// `v^⊥ = (v2, -v1, 0)`.
    pub fn perp(&self) -> Vec3 {
        Vec3([self.0[1], -self.0[0], 0.0])
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|v| v.is_finite())
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] + o.0[0], self.0[1] + o.0[1], self.0[2] + o.0[2]])
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3([self.0[0] - o.0[0], self.0[1] - o.0[1], self.0[2] - o.0[2]])
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3([self.0[0] * s, self.0[1] * s, self.0[2] * s])
    }
}

/// The one-parameter helical group with unit pitch.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HelicalTransform {
    kappa: f64,
}

impl Default for HelicalTransform {
    fn default() -> Self {
        Self { kappa: 1.0 }
    }
}

impl HelicalTransform {
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn apply(&self, theta: f64, x: Point3) -> Point3 {
        let [a, b] = rotate_plane(theta, x.0[0], x.0[1]);
        Vec3([a, b, x.0[2] + self.kappa * theta])
    }
}

/// `S_θ(x) = (x1 cosθ + x2 sinθ, -x1 sinθ + x2 cosθ, x3 + θ)`.
pub fn apply_group_action(theta: f64, x: Point3) -> Point3 {
    HelicalTransform::default().apply(theta, x)
}

#[inline]
fn rotate_plane(theta: f64, a: f64, b: f64) -> [f64; 2] {
    let (s, c) = theta.sin_cos();
    [c * a + s * b, -s * a + c * b]
}

/// `R_θ v` about the `x3` axis.
pub fn rotate_vector(theta: f64, v: Vec3) -> Vec3 {
    let [a, b] = rotate_plane(theta, v.0[0], v.0[1]);
    Vec3([a, b, v.0[2]])
}

/// Slice point `y(x) = R_{-x3}(x1, x2)` on the orbit of `x`.
pub fn to_slice_frame(x: Point3) -> Result<(f64, f64)> {
    let [x1, x2, x3] = x.0;
    if x1 * x1 + x2 * x2 > 1.0 + 1e-12 || !x.is_finite() {
        return Err(HelixError::OutOfDomain { x1, x2, x3 });
    }
    let [a, b] = rotate_plane(-x3, x1, x2);
    Ok((a, b))
}

/// Velocity and pressure traces of a helical flow on the slice `x3 = 0`.
#[derive(Clone, Debug)]
pub struct SliceField {
    pub grid: Arc<DiskGrid>,
    pub u: [Vec<f64>; 3],
    pub p: Vec<f64>,
}

impl SliceField {
    pub fn zeros(grid: Arc<DiskGrid>) -> Self {
        let n = grid.len();
        Self {
            grid,
            u: [vec![0.0; n], vec![0.0; n], vec![0.0; n]],
            p: vec![0.0; n],
        }
    }

    pub fn new(grid: Arc<DiskGrid>, u: [Vec<f64>; 3], p: Vec<f64>) -> Result<Self> {
        let n = grid.len();
        for c in u.iter().chain(std::iter::once(&p)) {
            if c.len() != n {
                return Err(HelixError::ShapeMismatch {
                    expected: n,
                    got: c.len(),
                });
            }
        }
        Ok(Self { grid, u, p })
    }

    /// Samples a velocity `f(y1, y2)` on the slice; pressure is zero.
    pub fn from_fn<F: Fn(f64, f64) -> Vec3>(grid: Arc<DiskGrid>, f: F) -> Self {
        let mut w = Self::zeros(grid);
        for i in 0..w.grid.len() {
            let (x, y) = w.grid.cartesian(i);
            let v = f(x, y);
            for c in 0..3 {
                w.u[c][i] = v.0[c];
            }
        }
        w
    }

    pub fn len(&self) -> usize {
        self.grid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grid.is_empty()
    }

    pub fn velocity_at(&self, i: usize) -> Vec3 {
        Vec3([self.u[0][i], self.u[1][i], self.u[2][i]])
    }

    pub fn same_grid(&self, other: &SliceField) -> bool {
        Arc::ptr_eq(&self.grid, &other.grid)
            || (self.grid.nr() == other.grid.nr() && self.grid.ntheta() == other.grid.ntheta())
    }

    /// Disk inner product of the velocities.
    pub fn inner(&self, other: &SliceField) -> f64 {
        (0..3)
            .map(|c| self.grid.inner(&self.u[c], &other.u[c]))
            .sum()
    }

    pub fn scale(&mut self, a: f64) {
        for c in self.u.iter_mut() {
            c.iter_mut().for_each(|v| *v *= a);
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        out.scale(a);
        out
    }

    /// `self + a * other` (velocity only; pressure kept from `self`).
    pub fn axpy(&self, a: f64, other: &SliceField) -> Self {
        let mut out = self.clone();
        for c in 0..3 {
            for (o, v) in out.u[c].iter_mut().zip(&other.u[c]) {
                *o += a * v;
            }
        }
        out
    }

    pub fn max_speed(&self) -> f64 {
        (0..self.len())
            .map(|i| self.velocity_at(i).norm())
            .fold(0.0, f64::max)
    }
}

/// Which sign the horizontal (angular) part of `∂3 u` carries.
///
/// `Rotational` is `∂3 u = ∂θ u + u^⊥` (from `∂_ξ u = u^⊥` with
/// `ξ = (x2, -x1, 1)`); `Reversed` flips the angular term. Only the first
/// agrees with finite differences of reconstructed fields.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum VerticalSign {
    Rotational,
    Reversed,
}

/// `∂3 u` on the slice, expressed through horizontal data only.
pub fn vertical_derivative_vec(w: &SliceField) -> [Vec<f64>; 3] {
    vertical_derivative_with_sign(w, VerticalSign::Rotational)
}

pub fn vertical_derivative_with_sign(w: &SliceField, sign: VerticalSign) -> [Vec<f64>; 3] {
    let g = &w.grid;
    let s = match sign {
        VerticalSign::Rotational => 1.0,
        VerticalSign::Reversed => -1.0,
    };
    let mut d: [Vec<f64>; 3] = [g.d_theta(&w.u[0]), g.d_theta(&w.u[1]), g.d_theta(&w.u[2])];
    for c in d.iter_mut() {
        c.iter_mut().for_each(|v| *v *= s);
    }
    for i in 0..g.len() {
        d[0][i] += w.u[1][i];
        d[1][i] -= w.u[0][i];
    }
    d
}

/// `∂3 f` of a helical scalar, i.e. its angular derivative on the slice.
pub fn vertical_derivative_scalar(grid: &DiskGrid, f: &[f64]) -> Vec<f64> {
    grid.d_theta(f)
}

/// Value of the helical extension of `w` at `x`, by bilinear interpolation
/// on the slice grid followed by the rotation `R_{x3}`.
pub fn reconstruct(w: &SliceField, x: Point3) -> Result<Vec3> {
    let x3 = x.0[2];
    if !(-1e-12..=2.0 * PI + 1e-12).contains(&x3) {
        return Err(HelixError::OutOfDomain {
            x1: x.0[0],
            x2: x.0[1],
            x3,
        });
    }
    let (y1, y2) = to_slice_frame(x)?;
    let r = (y1 * y1 + y2 * y2).sqrt().min(1.0);
    let th = y2.atan2(y1);
    let g = &w.grid;
    let v = Vec3([
        g.interpolate(&w.u[0], r, th, 0.0),
        g.interpolate(&w.u[1], r, th, 0.0),
        g.interpolate(&w.u[2], r, th, 0.0),
    ]);
    Ok(rotate_vector(x3, v))
}

/// Pressure of the helical extension at `x`: `q(y(x))`.
pub fn reconstruct_scalar(grid: &DiskGrid, q: &[f64], x: Point3) -> Result<f64> {
    let (y1, y2) = to_slice_frame(x)?;
    let r = (y1 * y1 + y2 * y2).sqrt().min(1.0);
    Ok(grid.interpolate(q, r, y2.atan2(y1), 0.0))
}

/// A vector field sampled on the cylinder `B1 x [0, 2π)`.
///
/// Nodes: `r_j = (j + 1/2)/nr`, `θ_k = 2πk/ntheta`, `x3_l = 2πl/nz`;
/// storage is plane-major, `i = (l * nr + j) * ntheta + k`.
#[derive(Clone, Debug)]
pub struct CylinderField {
    pub nr: usize,
    pub ntheta: usize,
    pub nz: usize,
    pub values: Vec<Vec3>,
}

impl CylinderField {
    pub fn zeros(nr: usize, ntheta: usize, nz: usize) -> Self {
        Self {
            nr,
            ntheta,
            nz,
            values: vec![Vec3::ZERO; nr * ntheta * nz],
        }
    }

    pub fn from_fn<F: Fn(f64, f64, f64) -> Vec3>(
        nr: usize,
        ntheta: usize,
        nz: usize,
        f: F,
    ) -> Self {
        let mut out = Self::zeros(nr, ntheta, nz);
        for l in 0..nz {
            for j in 0..nr {
                for k in 0..ntheta {
                    let (x, y, z) = out.node(j, k, l);
                    let i = out.index(j, k, l);
                    out.values[i] = f(x, y, z);
                }
            }
        }
        out
    }

    #[inline]
    pub fn index(&self, j: usize, k: usize, l: usize) -> usize {
        (l * self.nr + j) * self.ntheta + k
    }

    pub fn radius(&self, j: usize) -> f64 {
        (j as f64 + 0.5) / self.nr as f64
    }

    pub fn dtheta(&self) -> f64 {
        2.0 * PI / self.ntheta as f64
    }

    pub fn dz(&self) -> f64 {
        2.0 * PI / self.nz as f64
    }

    /// Cartesian coordinates of node `(j, k, l)`.
    pub fn node(&self, j: usize, k: usize, l: usize) -> (f64, f64, f64) {
        let r = self.radius(j);
        let t = k as f64 * self.dtheta();
        (r * t.cos(), r * t.sin(), l as f64 * self.dz())
    }

    /// Quadrature weight `r Δr Δθ Δx3` of a node on ring `j`.
    pub fn weight(&self, j: usize) -> f64 {
        self.radius(j) / self.nr as f64 * self.dtheta() * self.dz()
    }

    pub fn l2_norm(&self) -> f64 {
        self.weighted_sum(|_, v| v.norm_sq()).sqrt()
    }

    /// `Σ w_i f(ring, value)` over every node.
    pub fn weighted_sum<F: Fn(usize, &Vec3) -> f64>(&self, f: F) -> f64 {
        let mut s = 0.0;
        for l in 0..self.nz {
            for j in 0..self.nr {
                let w = self.weight(j);
                for k in 0..self.ntheta {
                    s += w * f(j, &self.values[self.index(j, k, l)]);
                }
            }
        }
        s
    }

    /// Helical extension of a slice field on this node layout. When the
    /// vertical step is a whole number of angular steps the slice node is
    /// read directly, otherwise it is interpolated.
    pub fn from_slice(w: &SliceField, nz: usize) -> Result<Self> {
        let g = &w.grid;
        let (nr, nt) = (g.nr(), g.ntheta());
        let mut out = Self::zeros(nr, nt, nz);
        let exact = nt % nz == 0;
        for l in 0..nz {
            let z = l as f64 * out.dz();
            for j in 0..nr {
                for k in 0..nt {
                    let i = out.index(j, k, l);
                    out.values[i] = if exact {
                        let shift = l * (nt / nz);
                        let src = g.index(j, (k + shift) % nt);
                        rotate_vector(z, w.velocity_at(src))
                    } else {
                        let (x, y, _) = out.node(j, k, l);
                        reconstruct(w, Vec3([x, y, z]))?
                    };
                }
            }
        }
        Ok(out)
    }
}

/// Discrete `L²` norm of `∂_ξ u - u^⊥`, `∂_ξ = x2∂1 - x1∂2 + ∂3 = ∂3 - ∂φ`,
/// with centred periodic differences in `φ` and `x3`.
pub fn helical_residual(u: &CylinderField) -> Result<f64> {
    if u.nr < 3 || u.ntheta < 3 || u.nz < 3 {
        return Err(HelixError::InvalidGrid(format!(
            "cylinder grid {}x{}x{} is too small for the residual stencil",
            u.nr, u.ntheta, u.nz
        )));
    }
    let (dt, dz) = (u.dtheta(), u.dz());
    let mut sum = 0.0;
    for l in 0..u.nz {
        let (lp, lm) = ((l + 1) % u.nz, (l + u.nz - 1) % u.nz);
        for j in 0..u.nr {
            let w = u.weight(j);
            for k in 0..u.ntheta {
                let (kp, km) = ((k + 1) % u.ntheta, (k + u.ntheta - 1) % u.ntheta);
                let v = u.values[u.index(j, k, l)];
                let dz_v = (u.values[u.index(j, k, lp)] - u.values[u.index(j, k, lm)]) * (0.5 / dz);
                let dphi = (u.values[u.index(j, kp, l)] - u.values[u.index(j, km, l)]) * (0.5 / dt);
                let res = dz_v - dphi - v.perp();
                sum += w * res.norm_sq();
            }
        }
    }
    Ok(sum.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn close(a: Vec3, b: Vec3, tol: f64) -> bool {
        (a - b).norm() <= tol
    }

    #[test]
    fn group_action_examples() {
        let x = Vec3::new(0.3, -0.2, 1.0);
        assert_eq!(apply_group_action(0.0, x), x);
        let y = apply_group_action(2.0 * PI, Vec3::new(0.4, 0.1, -0.3));
        assert!(close(y, Vec3::new(0.4, 0.1, -0.3 + 2.0 * PI), 1e-14));
        let z = apply_group_action(PI / 2.0, Vec3::new(1.0, 0.0, 0.0));
        assert!(close(z, Vec3::new(0.0, -1.0, PI / 2.0), 1e-15));
    }

    #[test]
    fn group_law_holds() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..1000 {
            let (a, b) = (rng.gen_range(-7.0..7.0), rng.gen_range(-7.0..7.0));
            let x = Vec3::new(
                rng.gen_range(-1.0..1.0),
                rng.gen_range(-1.0..1.0),
                rng.gen_range(0.0..6.0),
            );
            let lhs = apply_group_action(a, apply_group_action(b, x));
            let rhs = apply_group_action(a + b, x);
            assert!(close(lhs, rhs, 1e-13));
        }
    }

    #[test]
    fn rotation_examples() {
        let v = Vec3::new(1.0, 2.0, 3.0);
        assert_eq!(rotate_vector(0.0, v), v);
        assert!(close(
            rotate_vector(PI, v),
            Vec3::new(-1.0, -2.0, 3.0),
            1e-15
        ));
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..100 {
            let v = Vec3::new(rng.gen(), rng.gen(), rng.gen());
            let t: f64 = rng.gen_range(-10.0..10.0);
            assert!((rotate_vector(t, v).norm() - v.norm()).abs() < 1e-14);
        }
    }

    #[test]
    fn perp_properties() {
        let v = Vec3::new(0.3, -1.2, 5.0);
        assert!((v.perp().norm_sq() - (0.09 + 1.44)).abs() < 1e-15);
        assert_eq!(v.perp().perp(), Vec3::new(-0.3, 1.2, 0.0));
    }

    #[test]
    fn slice_frame_examples() {
        assert_eq!(
            to_slice_frame(Vec3::new(0.5, 0.0, 0.0)).unwrap(),
            (0.5, 0.0)
        );
        let (a, b) = to_slice_frame(Vec3::new(0.0, 0.0, 2.7)).unwrap();
        assert!(a.abs() < 1e-15 && b.abs() < 1e-15);
        assert!(to_slice_frame(Vec3::new(0.9, 0.9, 0.0)).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..100 {
            let r: f64 = rng.gen_range(0.0..1.0);
            let a: f64 = rng.gen_range(0.0..2.0 * PI);
            let th: f64 = rng.gen_range(-10.0..10.0);
            let y = (r * a.cos(), r * a.sin());
            let (b1, b2) =
                to_slice_frame(apply_group_action(th, Vec3::new(y.0, y.1, 0.0))).unwrap();
            assert!((b1 - y.0).abs() < 1e-13 && (b2 - y.1).abs() < 1e-13);
        }
    }

    #[test]
    fn reconstruct_vertical_constant_and_rigid_rotation() {
        let g = Arc::new(DiskGrid::new(32, 32).unwrap());
        let w = SliceField::from_fn(g.clone(), |_, _| Vec3::new(0.0, 0.0, 1.0));
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        for _ in 0..200 {
            let r: f64 = rng.gen_range(0.0..0.95);
            let a: f64 = rng.gen_range(0.0..2.0 * PI);
            let z: f64 = rng.gen_range(0.0..2.0 * PI);
            let x = Vec3::new(r * a.cos(), r * a.sin(), z);
            // the wall value is zero, so stay inside the last ring
            if r < g.radius(g.nr() - 1) {
                assert!(close(
                    reconstruct(&w, x).unwrap(),
                    Vec3::new(0.0, 0.0, 1.0),
                    1e-12
                ));
            }
        }
        let rot = SliceField::from_fn(g.clone(), |x, y| Vec3::new(-y, x, 0.0));
        let cyl = CylinderField::from_slice(&rot, 32).unwrap();
        for l in 0..32 {
            for j in 0..32 {
                for k in 0..32 {
                    let (x, y, _) = cyl.node(j, k, l);
                    assert!(close(
                        cyl.values[cyl.index(j, k, l)],
                        Vec3::new(-y, x, 0.0),
                        1e-12
                    ));
                }
            }
        }
        // centred differences in φ are second order, so the residual of an
        // exact helical field falls by ~4 per refinement
        let coarse = helical_residual(&cyl).unwrap();
        let g2 = Arc::new(DiskGrid::new(16, 64).unwrap());
        let rot2 = SliceField::from_fn(g2, |x, y| Vec3::new(-y, x, 0.0));
        let fine = helical_residual(&CylinderField::from_slice(&rot2, 16).unwrap()).unwrap();
        assert!(coarse < 0.03 && coarse / fine > 3.8, "{coarse} {fine}");
        assert!(reconstruct(&w, Vec3::new(0.0, 0.0, 7.0)).is_err());
        assert!(reconstruct(&w, Vec3::new(1.1, 0.0, 1.0)).is_err());
    }

    #[test]
    fn residual_of_constant_fields() {
        let c = CylinderField::from_fn(8, 8, 8, |_, _, _| Vec3::new(0.0, 0.0, 1.0));
        assert_eq!(helical_residual(&c).unwrap(), 0.0);
        let e1 = CylinderField::from_fn(16, 16, 16, |_, _, _| Vec3::new(1.0, 0.0, 0.0));
        // ∂_ξ u vanishes, u^⊥ = (0, -1, 0): residual² = |D| = 2π²
        let r = helical_residual(&e1).unwrap();
        assert!((r * r - 2.0 * PI * PI).abs() < 1e-10);
        assert!(helical_residual(&CylinderField::zeros(2, 8, 8)).is_err());
    }
}
