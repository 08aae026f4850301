//! Coarse brute-force reference solver on the full cylinder.
//!
//! Everything here is deliberately plain and independent of the slice
//! solver: second-order centred differences in `r`, `φ` and `x3` (no spectral
//! differencing), Cartesian velocity components for transport and diffusion,
//! across-the-axis ghosts at the centre, and a pressure projection built from
//! the full 3D gradient. One step is
//!
//! 1. explicit Euler transport `u* = u - dt (u·∇)u`,
//! 2. backward Euler horizontal diffusion `(I - ν dt Δ_h) u** = u*`,
//! 3. projection `u = u** - G (GᵀWG)⁺ GᵀW u**`, exact in the discrete
//!    divergence `D = -W⁻¹GᵀW`.
//!
//! The grid is the one of [`CylinderField`]. Fourier modes in `φ` and `x3`
//! decouple every linear operator into small radial problems.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};

use crate::checkpoint::Checkpoint;
use crate::error::{HelixError, Result};
use crate::estimates::BoundReport;
use crate::fields::random_helical_field;
use crate::grid::DiskGrid;
use crate::helix::{vertical_derivative_with_sign, CylinderField, SliceField, Vec3, VerticalSign};
use crate::solver::{Solver, SolverConfig};

/// Largest extent accepted in any direction.
pub const MAX_EXTENT: usize = 64;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Oracle3dConfig {
    pub nu: f64,
    pub dt: f64,
    pub advection_on: bool,
    /// Bound on `dt max|u| / Δr`.
    pub cfl_max: f64,
}

impl Default for Oracle3dConfig {
    fn default() -> Self {
        Self {
            nu: 0.5,
            dt: 5e-4,
            advection_on: true,
            cfl_max: 0.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Cylinder3DState {
    pub u: CylinderField,
    /// Pressure of the last projection, same layout as `u`.
    pub p: Vec<f64>,
    pub t: f64,
}

impl Cylinder3DState {
    pub fn new(u: CylinderField) -> Self {
        let n = u.values.len();
        Self {
            u,
            p: vec![0.0; n],
            t: 0.0,
        }
    }

    /// Helical extension of a slice dump onto `nz` planes.
    pub fn from_checkpoint(ck: &Checkpoint, nz: usize) -> Result<Self> {
        let mut s = Self::new(CylinderField::from_slice(&ck.field, nz)?);
        s.t = ck.t;
        Ok(s)
    }

    /// `Σ w |u|²`, the squared cylinder `L²` norm.
    pub fn energy(&self) -> f64 {
        self.u.weighted_sum(|_, v| v.norm_sq())
    }
}

type Spectrum = Vec<Complex64>;

/// Precomputed transforms and radial operators for one grid.
pub struct Oracle3d {
    cfg: Oracle3dConfig,
    nr: usize,
    nt: usize,
    nz: usize,
    fwd_t: Arc<dyn Fft<f64>>,
    inv_t: Arc<dyn Fft<f64>>,
    fwd_z: Arc<dyn Fft<f64>>,
    inv_z: Arc<dyn Fft<f64>>,
    /// Pseudo-inverse of `GᵀWG`, indexed by folded `(m, kz)`.
    pinv: Vec<DMatrix<f64>>,
    /// Radial centred difference, even and odd angular parity.
    dr: [DMatrix<f64>; 2],
}

impl std::fmt::Debug for Oracle3d {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Oracle3d({}x{}x{})", self.nr, self.nt, self.nz)
    }
}

impl Oracle3d {
    pub fn new(cfg: Oracle3dConfig, nr: usize, nt: usize, nz: usize) -> Result<Self> {
        if nr < 3 || nt < 4 || nz < 4 || nt % 2 != 0 || nz % 2 != 0 {
            return Err(HelixError::InvalidGrid(format!(
                "oracle grid {nr}x{nt}x{nz}: need nr >= 3 and even ntheta, nz >= 4"
            )));
        }
        if nr.max(nt).max(nz) > MAX_EXTENT {
            return Err(HelixError::InvalidGrid(format!(
                "oracle grid {nr}x{nt}x{nz} exceeds the cap of {MAX_EXTENT} per direction"
            )));
        }
        if !(cfg.nu >= 0.0 && cfg.dt > 0.0 && cfg.cfl_max > 0.0) {
            return Err(HelixError::Config(format!("bad oracle config {cfg:?}")));
        }
        let mut planner = FftPlanner::new();
        let dr = [radial_difference(nr, 1.0), radial_difference(nr, -1.0)];
        let mut out = Self {
            cfg,
            nr,
            nt,
            nz,
            fwd_t: planner.plan_fft_forward(nt),
            inv_t: planner.plan_fft_inverse(nt),
            fwd_z: planner.plan_fft_forward(nz),
            inv_z: planner.plan_fft_inverse(nz),
            pinv: Vec::new(),
            dr,
        };
        for m in 0..=nt / 2 {
            for kz in 0..=nz / 2 {
                out.pinv.push(out.normal_pinv(m, kz));
            }
        }
        Ok(out)
    }

    pub fn config(&self) -> &Oracle3dConfig {
        &self.cfg
    }

    fn h(&self) -> f64 {
        1.0 / self.nr as f64
    }

    fn r(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.h()
    }

    fn idx(&self, j: usize, k: usize, l: usize) -> usize {
        (l * self.nr + j) * self.nt + k
    }

    /// Symbol of the centred difference in `φ` for mode `m`.
    fn s_theta(&self, m: usize) -> f64 {
        let d = 2.0 * PI / self.nt as f64;
        (m as f64 * d).sin() / d
    }

    fn s_z(&self, kz: usize) -> f64 {
        let d = 2.0 * PI / self.nz as f64;
        (kz as f64 * d).sin() / d
    }

    fn parity(&self, m: usize) -> usize {
        m % 2
    }

    fn normal_pinv(&self, m: usize, kz: usize) -> DMatrix<f64> {
        let n = self.nr;
        let d = &self.dr[self.parity(m)];
        let w = DMatrix::from_diagonal(&DVector::from_fn(n, |j, _| self.r(j)));
        let (sm, sk) = (self.s_theta(m), self.s_z(kz));
        let mut a = d.transpose() * &w * d;
        for j in 0..n {
            a[(j, j)] += self.r(j) * (sm * sm / (self.r(j) * self.r(j)) + sk * sk);
        }
        let eig = SymmetricEigen::new(a);
        let top = eig.eigenvalues.iter().fold(0.0_f64, |a, &b| a.max(b.abs()));
        let inv = eig
            .eigenvalues
            .map(|l| if l.abs() > 1e-11 * top { 1.0 / l } else { 0.0 });
        &eig.eigenvectors * DMatrix::from_diagonal(&inv) * eig.eigenvectors.transpose()
    }

    fn fold(&self, m: usize, kz: usize) -> usize {
        let m = m.min(self.nt - m);
        let kz = kz.min(self.nz - kz);
        m * (self.nz / 2 + 1) + kz
    }

    fn forward(&self, f: &[f64]) -> Spectrum {
        let mut a: Spectrum = f.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        for row in a.chunks_mut(self.nt) {
            self.fwd_t.process(row);
        }
        self.transform_z(&mut a, &self.fwd_z);
        a
    }

    fn inverse(&self, mut a: Spectrum) -> Vec<f64> {
        for row in a.chunks_mut(self.nt) {
            self.inv_t.process(row);
        }
        self.transform_z(&mut a, &self.inv_z);
        let s = 1.0 / (self.nt * self.nz) as f64;
        a.iter().map(|c| c.re * s).collect()
    }

    fn transform_z(&self, a: &mut Spectrum, plan: &Arc<dyn Fft<f64>>) {
        let mut col = vec![Complex64::new(0.0, 0.0); self.nz];
        for j in 0..self.nr {
            for k in 0..self.nt {
                for (l, c) in col.iter_mut().enumerate() {
                    *c = a[self.idx(j, k, l)];
                }
                plan.process(&mut col);
                for (l, c) in col.iter().enumerate() {
                    a[self.idx(j, k, l)] = *c;
                }
            }
        }
    }

    fn check(&self, u: &CylinderField) -> Result<()> {
        if (u.nr, u.ntheta, u.nz) != (self.nr, self.nt, self.nz) {
            return Err(HelixError::GridMismatch(format!(
                "field is {}x{}x{}, oracle is {}x{}x{}",
                u.nr, u.ntheta, u.nz, self.nr, self.nt, self.nz
            )));
        }
        Ok(())
    }

    /// Splits Cartesian components into `(u_r, u_φ, u3)`.
    fn to_polar(&self, u: &CylinderField) -> [Vec<f64>; 3] {
        let mut out: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; u.values.len()]);
        for (i, v) in u.values.iter().enumerate() {
            let k = i % self.nt;
            let (s, c) = (k as f64 * 2.0 * PI / self.nt as f64).sin_cos();
            out[0][i] = c * v.0[0] + s * v.0[1];
            out[1][i] = -s * v.0[0] + c * v.0[1];
            out[2][i] = v.0[2];
        }
        out
    }

    fn from_polar(&self, p: &[Vec<f64>; 3], u: &mut CylinderField) {
        for (i, v) in u.values.iter_mut().enumerate() {
            let k = i % self.nt;
            let (s, c) = (k as f64 * 2.0 * PI / self.nt as f64).sin_cos();
            *v = Vec3([
                c * p[0][i] - s * p[1][i],
                s * p[0][i] + c * p[1][i],
                p[2][i],
            ]);
        }
    }

    /// `GᵀW u` per mode, for polar spectra.
    fn adjoint_gradient(&self, hat: &[Spectrum; 3], m: usize, kz: usize) -> Vec<Complex64> {
        let n = self.nr;
        let d = &self.dr[self.parity(m)];
        let (sm, sk) = (self.s_theta(m), self.s_z(kz));
        let i = Complex64::new(0.0, 1.0);
        let mut b = vec![Complex64::new(0.0, 0.0); n];
        for (jj, bj) in b.iter_mut().enumerate() {
            for ii in 0..n {
                let c = d[(ii, jj)];
                if c != 0.0 {
                    *bj += c * self.r(ii) * hat[0][self.idx(ii, m, kz)];
                }
            }
            let rj = self.r(jj);
            *bj -= i * sm * hat[1][self.idx(jj, m, kz)];
            *bj -= i * sk * rj * hat[2][self.idx(jj, m, kz)];
        }
        b
    }

    /// Projects onto discretely divergence-free fields; returns `φ` with
    /// `u_new = u - Gφ`.
    pub fn project(&self, u: &mut CylinderField) -> Result<Vec<f64>> {
        self.check(u)?;
        let polar = self.to_polar(u);
        let mut hat: [Spectrum; 3] = std::array::from_fn(|c| self.forward(&polar[c]));
        let mut phi_hat = vec![Complex64::new(0.0, 0.0); u.values.len()];
        let i = Complex64::new(0.0, 1.0);
        for m in 0..self.nt {
            let d = &self.dr[self.parity(m)];
            let sm = self.s_theta(m);
            for kz in 0..self.nz {
                let sk = self.s_z(kz);
                let b = self.adjoint_gradient(&hat, m, kz);
                let pinv = &self.pinv[self.fold(m, kz)];
                let re = pinv * DVector::from_iterator(self.nr, b.iter().map(|c| c.re));
                let im = pinv * DVector::from_iterator(self.nr, b.iter().map(|c| c.im));
                let p: Vec<Complex64> =
                    (0..self.nr).map(|j| Complex64::new(re[j], im[j])).collect();
                for j in 0..self.nr {
                    let mut gr = Complex64::new(0.0, 0.0);
                    for (jj, pj) in p.iter().enumerate() {
                        let c = d[(j, jj)];
                        if c != 0.0 {
                            gr += c * pj;
                        }
                    }
                    let at = self.idx(j, m, kz);
                    hat[0][at] -= gr;
                    hat[1][at] -= i * sm * p[j] / self.r(j);
                    hat[2][at] -= i * sk * p[j];
                    phi_hat[at] = p[j];
                }
            }
        }
        let polar: [Vec<f64>; 3] = hat.map(|h| self.inverse(h));
        self.from_polar(&polar, u);
        Ok(self.inverse(phi_hat))
    }

    /// Weighted `L²` norm of the discrete divergence `-W⁻¹GᵀW u`.
    pub fn divergence_residual(&self, u: &CylinderField) -> Result<f64> {
        self.check(u)?;
        let polar = self.to_polar(u);
        let hat: [Spectrum; 3] = std::array::from_fn(|c| self.forward(&polar[c]));
        let cell = self.h() * (2.0 * PI / self.nt as f64) * (2.0 * PI / self.nz as f64);
        let parseval = 1.0 / (self.nt * self.nz) as f64;
        let mut sum = 0.0;
        for m in 0..self.nt {
            for kz in 0..self.nz {
                let b = self.adjoint_gradient(&hat, m, kz);
                for (j, bj) in b.iter().enumerate() {
                    sum += bj.norm_sqr() / self.r(j) * cell * parseval;
                }
            }
        }
        Ok(sum.sqrt())
    }

    /// `(u·∇) f` for one Cartesian component, centred everywhere.
    fn transport(&self, u: &CylinderField, comp: usize) -> Vec<f64> {
        let (nr, nt, nz) = (self.nr, self.nt, self.nz);
        let (h, dphi, dz) = (self.h(), 2.0 * PI / nt as f64, 2.0 * PI / nz as f64);
        let f = |j: usize, k: usize, l: usize| u.values[self.idx(j, k, l)].0[comp];
        let mut out = vec![0.0; u.values.len()];
        for l in 0..nz {
            let (lp, lm) = ((l + 1) % nz, (l + nz - 1) % nz);
            for j in 0..nr {
                let r = self.r(j);
                for k in 0..nt {
                    let (kp, km) = ((k + 1) % nt, (k + nt - 1) % nt);
                    let inner = if j == 0 {
                        f(0, (k + nt / 2) % nt, l)
                    } else {
                        f(j - 1, k, l)
                    };
                    let outer = if j + 1 == nr {
                        -f(j, k, l)
                    } else {
                        f(j + 1, k, l)
                    };
                    let fr = (outer - inner) / (2.0 * h);
                    let ft = (f(j, kp, l) - f(j, km, l)) / (2.0 * dphi);
                    let fz = (f(j, k, lp) - f(j, k, lm)) / (2.0 * dz);
                    let v = u.values[self.idx(j, k, l)].0;
                    let (s, c) = (k as f64 * dphi).sin_cos();
                    let ar = c * v[0] + s * v[1];
                    let at = -s * v[0] + c * v[1];
                    out[self.idx(j, k, l)] = ar * fr + at / r * ft + v[2] * fz;
                }
            }
        }
        out
    }

    /// Solves `(I - ν dt Δ_h) g = f` for one Cartesian component.
    fn diffuse(&self, f: &[f64]) -> Vec<f64> {
        let a = self.cfg.nu * self.cfg.dt;
        if a == 0.0 {
            return f.to_vec();
        }
        let n = self.nr;
        let h2 = self.h() * self.h();
        let dphi = 2.0 * PI / self.nt as f64;
        let mut hat = self.forward(f);
        let (mut lo, mut di, mut up) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        let mut rhs = vec![Complex64::new(0.0, 0.0); n];
        for m in 0..self.nt {
            let lam = (2.0 - 2.0 * (m as f64 * dphi).cos()) / (dphi * dphi);
            for j in 0..n {
                let r = self.r(j);
                let rin = if j == 0 { 0.0 } else { r - 0.5 * self.h() };
                let rout = r + 0.5 * self.h();
                // Dirichlet wall through the ghost value -f
                let wall = if j + 1 == n { 2.0 * rout } else { rout };
                lo[j] = -a * rin / (r * h2);
                up[j] = if j + 1 == n {
                    0.0
                } else {
                    -a * rout / (r * h2)
                };
                di[j] = 1.0 + a * (rin + wall) / (r * h2) + a * lam / (r * r);
            }
            for kz in 0..self.nz {
                for (j, v) in rhs.iter_mut().enumerate() {
                    *v = hat[self.idx(j, m, kz)];
                }
                thomas(&lo, &di, &up, &mut rhs);
                for (j, v) in rhs.iter().enumerate() {
                    hat[self.idx(j, m, kz)] = *v;
                }
            }
        }
        self.inverse(hat)
    }

    /// `dt max|u| / Δr`.
    pub fn cfl(&self, u: &CylinderField) -> f64 {
        let vmax = u.values.iter().map(|v| v.norm()).fold(0.0, f64::max);
        self.cfg.dt * vmax / self.h()
    }

    pub fn step(&self, state: &Cylinder3DState) -> Result<Cylinder3DState> {
        self.check(&state.u)?;
        let cfl = self.cfl(&state.u);
        if !(cfl <= self.cfg.cfl_max) {
            return Err(HelixError::Cfl {
                cfl,
                limit: self.cfg.cfl_max,
            });
        }
        let dt = self.cfg.dt;
        let mut comps: [Vec<f64>; 3] =
            std::array::from_fn(|c| state.u.values.iter().map(|v| v.0[c]).collect());
        if self.cfg.advection_on {
            for (c, comp) in comps.iter_mut().enumerate() {
                let adv = self.transport(&state.u, c);
                comp.iter_mut().zip(&adv).for_each(|(v, a)| *v -= dt * a);
            }
        }
        let comps: [Vec<f64>; 3] = comps.map(|c| self.diffuse(&c));
        let mut u = state.u.clone();
        for (i, v) in u.values.iter_mut().enumerate() {
            *v = Vec3([comps[0][i], comps[1][i], comps[2][i]]);
        }
        let phi = self.project(&mut u)?;
        Ok(Cylinder3DState {
            u,
            p: phi.iter().map(|q| q / dt).collect(),
            t: state.t + dt,
        })
    }

    /// Projects the initial field and steps to `t_end`, which must be a
    /// whole number of steps.
    pub fn run(&self, mut state: Cylinder3DState, t_end: f64) -> Result<Cylinder3DState> {
        let steps = (t_end / self.cfg.dt).round() as usize;
        if (steps as f64 * self.cfg.dt - t_end).abs() > 1e-9 * t_end.max(self.cfg.dt) {
            return Err(HelixError::Config(format!(
                "t_end = {t_end} is not a whole number of oracle steps of {}",
                self.cfg.dt
            )));
        }
        self.project(&mut state.u)?;
        for _ in 0..steps {
            state = self.step(&state)?;
        }
        Ok(state)
    }
}

/// Centred radial difference with the across-axis ghost `f(-r, φ) =
/// parity · f(r, φ)` for one angular mode and a second-order one-sided
/// stencil on the outer ring.
fn radial_difference(nr: usize, parity: f64) -> DMatrix<f64> {
    let h = 1.0 / nr as f64;
    let mut d = DMatrix::zeros(nr, nr);
    for j in 0..nr {
        if j == 0 {
            d[(0, 0)] -= parity / (2.0 * h);
            d[(0, 1)] += 1.0 / (2.0 * h);
        } else if j + 1 == nr {
            d[(j, j)] += 3.0 / (2.0 * h);
            d[(j, j - 1)] -= 4.0 / (2.0 * h);
            d[(j, j - 2)] += 1.0 / (2.0 * h);
        } else {
            d[(j, j + 1)] += 1.0 / (2.0 * h);
            d[(j, j - 1)] -= 1.0 / (2.0 * h);
        }
    }
    d
}

/// Tridiagonal solve with real bands and a complex right-hand side.
fn thomas(lo: &[f64], di: &[f64], up: &[f64], x: &mut [Complex64]) {
    let n = x.len();
    let mut c = vec![0.0; n];
    let mut b = di[0];
    c[0] = up[0] / b;
    x[0] /= b;
    for j in 1..n {
        b = di[j] - lo[j] * c[j - 1];
        c[j] = up[j] / b;
        let prev = x[j - 1];
        x[j] = (x[j] - lo[j] * prev) / b;
    }
    for j in (0..n - 1).rev() {
        let next = x[j + 1];
        x[j] -= c[j] * next;
    }
}

/// Explicit 3D step with a freshly built operator set. Convenient for one
/// off use; loops should hold an [`Oracle3d`].
pub fn step3d(state: &Cylinder3DState, cfg: &Oracle3dConfig) -> Result<Cylinder3DState> {
    Oracle3d::new(cfg.clone(), state.u.nr, state.u.ntheta, state.u.nz)?.step(state)
}

/// Slice-versus-3D cross-validation setup.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompareConfig {
    pub nu: f64,
    pub t_end: f64,
    pub nr: usize,
    pub ntheta: usize,
    pub nz: usize,
    pub seed: u64,
    pub peak_speed: f64,
    pub slice_dt: f64,
    pub oracle_dt: f64,
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            nu: 0.5,
            t_end: 0.1,
            nr: 32,
            ntheta: 32,
            nz: 32,
            seed: 11,
            peak_speed: 1.0,
            slice_dt: 1e-3,
            oracle_dt: 5e-4,
        }
    }
}

/// Relative `L²(D)` difference with the outer shell broken out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub t: f64,
    pub relative_l2: f64,
    /// Contribution of the rings with `r > 1 - shell_width`.
    pub shell_relative_l2: f64,
    pub interior_relative_l2: f64,
    pub shell_width: f64,
}

impl Comparison {
    pub fn report(&self, tolerance: f64) -> BoundReport {
        let mut rep = BoundReport::new("slice-vs-3d", 0.0);
        rep.push(self.t, self.relative_l2, tolerance);
        rep.with_note(format!(
            "shell (r > {:.3}) {:.3e}, interior {:.3e}",
            1.0 - self.shell_width,
            self.shell_relative_l2,
            self.interior_relative_l2
        ))
    }
}

pub const SHELL_WIDTH: f64 = 0.1;

/// Relative difference between the helical extension of `slice` and `u3d`.
pub fn compare_fields(slice: &SliceField, u3d: &CylinderField, t: f64) -> Result<Comparison> {
    let g = &slice.grid;
    if g.nr() != u3d.nr || g.ntheta() != u3d.ntheta {
        return Err(HelixError::GridMismatch(format!(
            "slice {}x{} against cylinder {}x{}x{}",
            g.nr(),
            g.ntheta(),
            u3d.nr,
            u3d.ntheta,
            u3d.nz
        )));
    }
    let ext = CylinderField::from_slice(slice, u3d.nz)?;
    let edge = 1.0 - SHELL_WIDTH;
    let (mut shell, mut inner, mut base) = (0.0, 0.0, 0.0);
    for l in 0..u3d.nz {
        for j in 0..u3d.nr {
            let w = u3d.weight(j);
            for k in 0..u3d.ntheta {
                let i = u3d.index(j, k, l);
                let d = (ext.values[i] - u3d.values[i]).norm_sq() * w;
                if u3d.radius(j) > edge {
                    shell += d;
                } else {
                    inner += d;
                }
                base += u3d.values[i].norm_sq() * w;
            }
        }
    }
    if base == 0.0 {
        return Err(HelixError::ZeroField);
    }
    Ok(Comparison {
        t,
        relative_l2: ((shell + inner) / base).sqrt(),
        shell_relative_l2: (shell / base).sqrt(),
        interior_relative_l2: (inner / base).sqrt(),
        shell_width: SHELL_WIDTH,
    })
}

/// Runs the slice solver and the 3D oracle from the same smooth helical
/// data and compares them at `t_end`.
pub fn compare_slice_vs_3d(cfg: &CompareConfig) -> Result<Comparison> {
    let grid = Arc::new(DiskGrid::new(cfg.nr, cfg.ntheta)?);
    let w0 = random_helical_field(grid.clone(), cfg.seed, cfg.peak_speed);
    let scfg = SolverConfig {
        nu: cfg.nu,
        dt: cfg.slice_dt,
        t_end: cfg.t_end,
        checkpoint_every: usize::MAX,
        ..SolverConfig::default()
    };
    let (slice, _) = Solver::new(scfg, grid)?.run(&w0)?;
    let ocfg = Oracle3dConfig {
        nu: cfg.nu,
        dt: cfg.oracle_dt,
        ..Oracle3dConfig::default()
    };
    let oracle = Oracle3d::new(ocfg, cfg.nr, cfg.ntheta, cfg.nz)?;
    let start = Cylinder3DState::new(CylinderField::from_slice(&w0, cfg.nz)?);
    let end = oracle.run(start, cfg.t_end)?;
    compare_fields(&slice.w, &end.u, cfg.t_end)
}

/// Errors of both sign candidates for `∂3 u` against centred differences
/// across the planes of the helical extension.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SignArbitration {
    pub rotational_error: f64,
    pub reversed_error: f64,
}

impl SignArbitration {
    pub fn winner(&self) -> VerticalSign {
        if self.rotational_error <= self.reversed_error {
            VerticalSign::Rotational
        } else {
            VerticalSign::Reversed
        }
    }

    /// Loser error over winner error.
    pub fn discrimination(&self) -> f64 {
        let (a, b) = (self.rotational_error, self.reversed_error);
        a.max(b) / a.min(b).max(f64::MIN_POSITIVE)
    }
}

/// Relative `L²` errors of both candidate signs on the slice `w`, using
/// `nz = ntheta` planes so the extension is exact at every node.
pub fn sign_arbitration(w: &SliceField) -> Result<SignArbitration> {
    let g = &w.grid;
    let nz = g.ntheta();
    let cyl = CylinderField::from_slice(w, nz)?;
    let dz = cyl.dz();
    let mut fd: [Vec<f64>; 3] = std::array::from_fn(|_| vec![0.0; g.len()]);
    for j in 0..g.nr() {
        for k in 0..g.ntheta() {
            let up = cyl.values[cyl.index(j, k, 1)];
            let down = cyl.values[cyl.index(j, k, nz - 1)];
            let d = (up - down) * (0.5 / dz);
            for c in 0..3 {
                fd[c][g.index(j, k)] = d.0[c];
            }
        }
    }
    let base: f64 = fd.iter().map(|c| g.inner(c, c)).sum::<f64>();
    if base == 0.0 {
        return Err(HelixError::ZeroField);
    }
    let err = |sign| {
        let d = vertical_derivative_with_sign(w, sign);
        let e: f64 = (0..3)
            .map(|c| {
                let diff: Vec<f64> = d[c].iter().zip(&fd[c]).map(|(a, b)| a - b).collect();
                g.inner(&diff, &diff)
            })
            .sum();
        (e / base).sqrt()
    };
    Ok(SignArbitration {
        rotational_error: err(VerticalSign::Rotational),
        reversed_error: err(VerticalSign::Reversed),
    })
}
