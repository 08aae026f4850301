//! Time stepping of the helical slice equations
//!
//! ```text
//! ∂t w + (w1 ∂1 + w2 ∂2 + w3 D3) w - ν Δ_h w + (∂1 p, ∂2 p, ∂θ p) = f
//! ∂1 w1 + ∂2 w2 + ∂θ w3 = 0,      w = 0 on r = 1
//! ```
//!
//! with `D3 w = ∂θ w + w^⊥`, the vertical derivative of the helical extension.

use std::f64::consts::PI;
use std::sync::Arc;

use log::{debug, warn};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{HelixError, Result};
use crate::estimates::{DifferenceLedger, EnergyLedger, LedgerRow, StepRecord};
use crate::fields::{stokes_eigenfield, Manufactured};
use crate::grid::{DiskGrid, ModalOperator, WallClosure};
use crate::helix::{vertical_derivative_vec, SliceField};
use crate::linalg::{gmres, pcg, CgStats};

/// Three velocity components on the slice grid.
pub type Velocity = [Vec<f64>; 3];

/// Body force evaluated at a given time.
pub type Forcing = dyn Fn(f64) -> Velocity + Send + Sync;

const TWO_PI: f64 = 2.0 * PI;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum TimeScheme {
    /// Crank–Nicolson in the viscous and advective terms, with the
    /// transporting velocity extrapolated as in Adams–Bashforth, and the
    /// pressure solved together with the velocity. The discrete energy law
    /// holds to solver tolerance.
    Coupled,
    /// Explicit Adams–Bashforth advection, Crank–Nicolson diffusion and an
    /// incremental pressure correction.
    Splitting,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    pub nu: f64,
    pub dt: f64,
    pub t_end: f64,
    /// Relative residual for every linear solve.
    pub cg_tol: f64,
    pub cfl_max: f64,
    /// Ledger sampling stride, in steps.
    pub checkpoint_every: usize,
    pub advection_on: bool,
    pub seed: u64,
    pub scheme: TimeScheme,
    /// Iteration cap for each Krylov solve.
    pub max_iterations: usize,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            nu: 0.5,
            dt: 1e-3,
            t_end: 2.0,
            cg_tol: 1e-10,
            cfl_max: 0.5,
            checkpoint_every: 10,
            advection_on: true,
            seed: 7,
            scheme: TimeScheme::Coupled,
            max_iterations: 400,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(HelixError::Config(m));
        if !(self.nu > 0.0 && self.nu.is_finite()) {
            return bad(format!("nu must be positive, got {}", self.nu));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0 && self.t_end.is_finite()) {
            return bad(format!("t_end must be non-negative, got {}", self.t_end));
        }
        if !(self.cg_tol > 0.0 && self.cg_tol <= 1e-3) {
            return bad(format!("cg_tol must lie in (0, 1e-3], got {}", self.cg_tol));
        }
        if !(self.cfl_max > 0.0 && self.cfl_max <= 0.5) {
            return bad(format!(
                "cfl_max must lie in (0, 0.5], got {}",
                self.cfl_max
            ));
        }
        if self.checkpoint_every == 0 {
            return bad("checkpoint_every must be at least 1".into());
        }
        if self.max_iterations == 0 {
            return bad("max_iterations must be at least 1".into());
        }
        self.steps()?;
        Ok(())
    }

    /// Number of steps to reach `t_end`; `t_end` must be a multiple of `dt`.
    pub fn steps(&self) -> Result<usize> {
        let n = (self.t_end / self.dt).round();
        if (n * self.dt - self.t_end).abs() > 1e-9 * self.t_end.max(self.dt) {
            return Err(HelixError::Config(format!(
                "t_end = {} is not a whole number of steps of dt = {}",
                self.t_end, self.dt
            )));
        }
        Ok(n as usize)
    }
}

#[derive(Clone, Debug)]
pub struct SolverState {
    pub t: f64,
    pub w: SliceField,
    /// Advection tendency of the previous step (splitting scheme).
    pub prev_advection: Option<Velocity>,
    /// Velocity of the previous step (coupled scheme).
    pub prev_velocity: Option<Velocity>,
    pub steps: usize,
}

impl SolverState {
    pub fn new(w: SliceField) -> Self {
        Self {
            t: 0.0,
            w,
            prev_advection: None,
            prev_velocity: None,
            steps: 0,
        }
    }
}

// -------------------------------------------------------------------
// spatial operators

/// Skew-symmetric convective term `C(a) v`:
/// `½ [Σ a_i A_i v - Σ A_i†(a_i v)] + a3 v^⊥` with `A = (∂1, ∂2, ∂θ)`.
/// For helically divergence-free `a` it approximates `(a1∂1 + a2∂2 + a3 D3) v`
/// and `⟨C(a) v, w⟩ = -⟨C(a) w, v⟩` holds for any `a`.
pub fn convective_term(grid: &DiskGrid, a: &Velocity, v: &Velocity) -> Velocity {
    let n = grid.len();
    let mut out: Velocity = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    let mut flux = [vec![0.0; n], vec![0.0; n], vec![0.0; n]];
    for c in 0..3 {
        let fr = grid.radial_derivative(&v[c], WallClosure::Dirichlet);
        let ft = grid.d_theta(&v[c]);
        let [d1, d2] = grid.polar_to_cartesian(&fr, &ft);
        for i in 0..n {
            for (f, ai) in flux.iter_mut().zip(a) {
                f[i] = ai[i] * v[c][i];
            }
        }
        let adj = grid.gradient_adjoint(&flux[0], &flux[1], Some(&flux[2]), WallClosure::Dirichlet);
        for i in 0..n {
            out[c][i] = 0.5 * (a[0][i] * d1[i] + a[1][i] * d2[i] + a[2][i] * ft[i] - adj[i]);
        }
    }
    for i in 0..n {
        out[0][i] += a[2][i] * v[1][i];
        out[1][i] -= a[2][i] * v[0][i];
    }
    out
}

/// `(w1 ∂1 + w2 ∂2 + w3 D3) w` in skew form.
pub fn helical_advection(w: &SliceField) -> Velocity {
    convective_term(&w.grid, &w.u, &w.u)
}

/// `(∂1 p, ∂2 p, ∂θ p)`.
pub fn pressure_gradient(grid: &DiskGrid, p: &[f64]) -> Velocity {
    grid.helical_gradient(p)
}

pub fn divergence(w: &SliceField) -> Vec<f64> {
    w.grid.divergence_helical(&w.u[0], &w.u[1], &w.u[2])
}

/// `L p = div ∇p` for the helical gradient.
pub fn helical_poisson_apply(grid: &DiskGrid, p: &[f64]) -> Vec<f64> {
    let g = grid.helical_gradient(p);
    grid.divergence_helical(&g[0], &g[1], &g[2])
}

/// Banded `LDLᵀ` factor of a symmetric pentadiagonal matrix.
#[derive(Clone, Debug)]
struct Penta {
    d: Vec<f64>,
    l1: Vec<f64>,
    l2: Vec<f64>,
}

impl Penta {
    /// Factors the matrix with diagonals `a0` (main), `a1`, `a2`.
    fn factor(a0: &[f64], a1: &[f64], a2: &[f64]) -> Self {
        let n = a0.len();
        let (mut d, mut l1, mut l2) = (vec![0.0; n], vec![0.0; n], vec![0.0; n]);
        for j in 0..n {
            let mut dj = a0[j];
            if j >= 1 {
                dj -= l1[j - 1] * l1[j - 1] * d[j - 1];
            }
            if j >= 2 {
                dj -= l2[j - 2] * l2[j - 2] * d[j - 2];
            }
            d[j] = dj;
            if j + 1 < n {
                let mut v = a1[j];
                if j >= 1 {
                    v -= l2[j - 1] * l1[j - 1] * d[j - 1];
                }
                l1[j] = v / dj;
            }
            if j + 2 < n {
                l2[j] = a2[j] / dj;
            }
        }
        Self { d, l1, l2 }
    }

    fn solve(&self, x: &mut [Complex64]) {
        let n = x.len();
        for j in 1..n {
            let mut v = x[j] - x[j - 1] * self.l1[j - 1];
            if j >= 2 {
                v -= x[j - 2] * self.l2[j - 2];
            }
            x[j] = v;
        }
        for j in 0..n {
            x[j] /= self.d[j];
        }
        for j in (0..n).rev() {
            let mut v = x[j];
            if j + 1 < n {
                v -= x[j + 1] * self.l1[j];
            }
            if j + 2 < n {
                v -= x[j + 2] * self.l2[j];
            }
            x[j] = v;
        }
    }
}

/// Pressure Poisson solver for `L = div ∇` built from the helical gradient.
///
/// `-L = Dr†Dr + (1 + 1/r²)(-∂θ²)` separates in angular Fourier modes, so
/// each mode is an exact pentadiagonal solve in `r`. The discrete gradient
/// annihilates constants and the ring-constant angular Nyquist mode
/// `(-1)^k`; pressures are kept orthogonal to both.
#[derive(Clone, Debug)]
pub struct HelicalPoisson {
    grid: Arc<DiskGrid>,
    modes: Vec<Penta>,
}

impl HelicalPoisson {
    pub fn new(grid: Arc<DiskGrid>) -> Self {
        let (nr, nt) = (grid.nr(), grid.ntheta());
        let mut modes = Vec::with_capacity(nt);
        for k in 0..nt {
            let sigma = grid.fft().first_symbol(k).powi(2);
            let (mut a0, mut a1, mut a2) = (vec![0.0; nr], vec![0.0; nr], vec![0.0; nr]);
            for j in 0..nr {
                // row j of Dr touches columns j-1, j, j+1
                let (lo, d, up) = grid.radial_stencil(j, WallClosure::Neumann);
                let w = grid.ring_weight(j);
                let cols = [(j as isize - 1, lo), (j as isize, d), (j as isize + 1, up)];
                for &(ca, va) in &cols {
                    for &(cb, vb) in &cols {
                        if ca < 0 || cb < 0 || ca >= nr as isize || cb >= nr as isize || cb < ca {
                            continue;
                        }
                        let v = w * va * vb;
                        match cb - ca {
                            0 => a0[ca as usize] += v,
                            1 => a1[ca as usize] += v,
                            _ => a2[ca as usize] += v,
                        }
                    }
                }
                let r = grid.radius(j);
                a0[j] += w * sigma * (1.0 + 1.0 / (r * r));
            }
            if sigma == 0.0 {
                // singular on ring-constant vectors; the shift only moves the
                // gauge component, which is removed afterwards
                let scale = a0.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
                a0.iter_mut().for_each(|v| *v += 1e-12 * scale);
            }
            modes.push(Penta::factor(&a0, &a1, &a2));
        }
        Self { grid, modes }
    }

    /// Components of `f` along the two gauge directions, normalised so
    /// that subtracting `c * v` removes them.
    fn gauge_components(&self, f: &[f64]) -> (f64, f64) {
        let g = &*self.grid;
        let nt = g.ntheta();
        let mean = g.integrate(f) / PI;
        let nyq: f64 = (0..g.len())
            .map(|i| if (i % nt) % 2 == 0 { 1.0 } else { -1.0 } * f[i] * g.weight(i))
            .sum::<f64>()
            / PI;
        (mean, nyq)
    }

    /// Projects out constants and the angular Nyquist mode.
    pub fn remove_gauge(&self, f: &mut [f64]) {
        let nt = self.grid.ntheta();
        let (mean, nyq) = self.gauge_components(f);
        for (i, v) in f.iter_mut().enumerate() {
            let s = if (i % nt) % 2 == 0 { 1.0 } else { -1.0 };
            *v -= mean + s * nyq;
        }
    }

    /// Exact inverse of `-L` on the gauge-free subspace.
    pub fn precondition(&self, r: &[f64]) -> Vec<f64> {
        let g = &*self.grid;
        let (nr, nt) = (g.nr(), g.ntheta());
        let mut spec = g.fft().forward(r);
        let mut col = vec![Complex64::new(0.0, 0.0); nr];
        for k in 0..nt {
            for j in 0..nr {
                col[j] = spec[j * nt + k] * g.ring_weight(j);
            }
            self.modes[k].solve(&mut col);
            for j in 0..nr {
                spec[j * nt + k] = col[j];
            }
        }
        let mut z = g.fft().inverse(spec);
        self.remove_gauge(&mut z);
        z
    }

    /// Solves `L p = rhs` in the gauge-free subspace, stopping once
    /// `‖rhs - L p‖ <= abs_tol`.
    pub fn solve_abs(
        &self,
        rhs: &[f64],
        abs_tol: f64,
        max_iter: usize,
    ) -> Result<(Vec<f64>, CgStats)> {
        let g = &*self.grid;
        let norm = g.l2_norm(rhs);
        let (mean, nyq) = self.gauge_components(rhs);
        // gauge components below the requested residual are harmless
        let allowed = (1e-9 * norm).max(0.5 * abs_tol) / PI.sqrt() + 1e-300;
        let worst = mean.abs().max(nyq.abs());
        if worst > allowed {
            return Err(HelixError::IncompatibleRhs {
                mean: worst,
                tol: allowed,
            });
        }
        let mut b: Vec<f64> = rhs.iter().map(|v| -v).collect();
        self.remove_gauge(&mut b);
        let mut p = vec![0.0; g.len()];
        let stats = pcg(
            |x: &[f64]| {
                let mut y = helical_poisson_apply(g, x);
                y.iter_mut().for_each(|v| *v = -*v);
                y
            },
            |r: &[f64]| self.precondition(r),
            |a: &[f64], b: &[f64]| g.inner(a, b),
            &b,
            &mut p,
            abs_tol,
            max_iter,
        )?;
        self.remove_gauge(&mut p);
        Ok((p, stats))
    }

    /// Checks that `-L` is symmetric and nonnegative on random mean-zero
    /// pairs before it is trusted inside a Krylov method.
    pub fn self_test(&self, seed: u64) -> Result<()> {
        let g = &*self.grid;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rand_field = || {
            let mut f: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            g.remove_mean(&mut f);
            f
        };
        for _ in 0..20 {
            let (f, h) = (rand_field(), rand_field());
            let (lf, lh) = (helical_poisson_apply(g, &f), helical_poisson_apply(g, &h));
            let scale = g.l2_norm(&lf) * g.l2_norm(&h) + g.l2_norm(&f) * g.l2_norm(&lh);
            let asym = (g.inner(&lf, &h) - g.inner(&f, &lh)).abs();
            if asym > 1e-10 * scale {
                return Err(HelixError::SelfTest(format!(
                    "pressure operator is not symmetric: |<Lf,g> - <f,Lg>| = {asym:e}"
                )));
            }
            let q = -g.inner(&lf, &f);
            if q < -1e-10 * g.l2_norm(&lf) * g.l2_norm(&f) {
                return Err(HelixError::SelfTest(format!(
                    "pressure operator is not semidefinite: <-Lf,f> = {q:e}"
                )));
            }
        }
        Ok(())
    }
}

/// Exact Schur complement `S = G† A0⁻¹ G` of the Stokes block, with
/// `A0 = I + α(-Δ_h)` under no-slip.
///
/// Writing the horizontal velocity as `u± = u1 ± i u2` turns the Cartesian
/// gradient of an angular mode `m` into modes `m ± 1`, and every other
/// operator is diagonal in the angular index, so `S` splits into one dense
/// `nr x nr` block per mode. Blocks `m` and `nt - m` coincide.
struct StokesSchur {
    grid: Arc<DiskGrid>,
    blocks: Vec<Cholesky<f64, Dyn>>,
}

impl StokesSchur {
    fn new(grid: Arc<DiskGrid>, alpha: f64) -> Result<Self> {
        let (nr, nt) = (grid.nr(), grid.ntheta());
        let w = DVector::from_fn(nr, |j, _| grid.ring_weight(j));
        let inv_r = DMatrix::from_diagonal(&DVector::from_fn(nr, |j, _| 1.0 / grid.radius(j)));
        let mut dr = DMatrix::zeros(nr, nr);
        for j in 0..nr {
            let (lo, d, up) = grid.radial_stencil(j, WallClosure::Neumann);
            dr[(j, j)] = d;
            if j > 0 {
                dr[(j, j - 1)] = lo;
            }
            if j + 1 < nr {
                dr[(j, j + 1)] = up;
            }
        }
        let op = ModalOperator {
            identity: 1.0,
            neg_laplacian: alpha,
            neg_theta2: 0.0,
            closure: WallClosure::Dirichlet,
        };
        // W A_k⁻¹ for every angular bin
        let mut bands = [vec![0.0; nr], vec![0.0; nr], vec![0.0; nr]];
        let mut weighted_inv = Vec::with_capacity(nt);
        for k in 0..nt {
            grid.modal_bands(op, k, &mut bands);
            let a = DMatrix::from_fn(nr, nr, |i, j| match j as isize - i as isize {
                -1 => bands[0][i],
                0 => bands[1][i],
                1 => bands[2][i],
                _ => 0.0,
            });
            let inv = a.try_inverse().ok_or_else(|| {
                HelixError::SelfTest(format!("viscous block of mode {k} is singular"))
            })?;
            weighted_inv.push(DMatrix::from_diagonal(&w) * inv);
        }
        let mut blocks = Vec::with_capacity(nt / 2 + 1);
        for m in 0..=nt / 2 {
            let s = grid.fft().first_symbol(m);
            let bp = &dr - &inv_r * s;
            let bm = &dr + &inv_r * s;
            let (kp, km) = ((m + 1) % nt, (m + nt - 1) % nt);
            let mut h = (bp.transpose() * &weighted_inv[kp] * &bp
                + bm.transpose() * &weighted_inv[km] * &bm)
                * 0.5
                + &weighted_inv[m] * (s * s);
            h = (&h + h.transpose()) * 0.5;
            if s == 0.0 {
                // constants are in the kernel; pin them with a rank-one shift
                let scale = h.diagonal().max() / w.dot(&w);
                h += &w * w.transpose() * scale;
            }
            let chol = h.cholesky().ok_or_else(|| {
                HelixError::SelfTest(format!("Schur block of mode {m} is not positive definite"))
            })?;
            blocks.push(chol);
        }
        Ok(Self { grid, blocks })
    }

    /// `S⁻¹ rhs` for gauge-free `rhs`; the result is gauge-free as well up
    /// to the caller's gauge removal.
    fn solve(&self, rhs: &[f64]) -> Vec<f64> {
        let g = &*self.grid;
        let (nr, nt) = (g.nr(), g.ntheta());
        let mut spec = g.fft().forward(rhs);
        let mut b = DMatrix::zeros(nr, 2);
        for (m, block) in self.blocks.iter().enumerate() {
            for j in 0..nr {
                let v = spec[j * nt + m] * g.ring_weight(j);
                b[(j, 0)] = v.re;
                b[(j, 1)] = v.im;
            }
            block.solve_mut(&mut b);
            for j in 0..nr {
                let v = Complex64::new(b[(j, 0)], b[(j, 1)]);
                spec[j * nt + m] = v;
                if m != 0 && 2 * m != nt {
                    spec[j * nt + nt - m] = v.conj();
                }
            }
        }
        g.fft().inverse(spec)
    }
}

/// Solves `L p = rhs` to relative residual `tol`.
pub fn solve_helical_poisson(grid: Arc<DiskGrid>, rhs: &[f64], tol: f64) -> Result<Vec<f64>> {
    let abs = tol * grid.l2_norm(rhs);
    HelicalPoisson::new(grid)
        .solve_abs(rhs, abs, 2000)
        .map(|(p, _)| p)
}

/// Removes the helical gradient part of `w`. The result has
/// `‖div‖ <= tol ‖w‖` and carries the potential in its pressure slot.
pub fn project(w: &SliceField, tol: f64) -> Result<SliceField> {
    project_with(&HelicalPoisson::new(w.grid.clone()), w, tol, 2000).map(|(v, _)| v)
}

fn project_with(
    poisson: &HelicalPoisson,
    w: &SliceField,
    tol: f64,
    max_iter: usize,
) -> Result<(SliceField, CgStats)> {
    let g = &*w.grid;
    let div = divergence(w);
    let norm = w.inner(w).sqrt();
    let (phi, stats) = poisson.solve_abs(&div, tol * norm, max_iter)?;
    let gp = g.helical_gradient(&phi);
    let mut out = w.clone();
    for c in 0..3 {
        out.u[c].iter_mut().zip(&gp[c]).for_each(|(u, d)| *u -= d);
    }
    out.p = phi;
    Ok((out, stats))
}

// -------------------------------------------------------------------
// time stepping

pub struct Solver {
    cfg: SolverConfig,
    grid: Arc<DiskGrid>,
    poisson: HelicalPoisson,
    schur: Option<StokesSchur>,
    forcing: Option<Arc<Forcing>>,
}

impl std::fmt::Debug for Solver {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Solver")
            .field("cfg", &self.cfg)
            .field("nr", &self.grid.nr())
            .field("ntheta", &self.grid.ntheta())
            .field("forced", &self.forcing.is_some())
            .finish()
    }
}

fn cyl_energy(g: &DiskGrid, u: &Velocity) -> f64 {
    TWO_PI * u.iter().map(|c| g.inner(c, c)).sum::<f64>()
}

fn zeros3(n: usize) -> Velocity {
    [vec![0.0; n], vec![0.0; n], vec![0.0; n]]
}

impl Solver {
    pub fn new(cfg: SolverConfig, grid: Arc<DiskGrid>) -> Result<Self> {
        cfg.validate()?;
        let poisson = HelicalPoisson::new(grid.clone());
        poisson.self_test(cfg.seed)?;
        let schur = match cfg.scheme {
            TimeScheme::Coupled => Some(StokesSchur::new(grid.clone(), 0.5 * cfg.nu * cfg.dt)?),
            TimeScheme::Splitting => None,
        };
        Ok(Self {
            cfg,
            grid,
            poisson,
            schur,
            forcing: None,
        })
    }

    pub fn with_forcing(mut self, f: Arc<Forcing>) -> Self {
        self.forcing = Some(f);
        self
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn grid(&self) -> &Arc<DiskGrid> {
        &self.grid
    }

    pub fn cfl(&self, w: &SliceField) -> f64 {
        self.cfg.dt * w.max_speed() / self.grid.dr()
    }

    fn check_grid(&self, w: &SliceField) -> Result<()> {
        if w.grid.nr() != self.grid.nr() || w.grid.ntheta() != self.grid.ntheta() {
            return Err(HelixError::GridMismatch(format!(
                "field is {}x{}, solver is {}x{}",
                w.grid.nr(),
                w.grid.ntheta(),
                self.grid.nr(),
                self.grid.ntheta()
            )));
        }
        Ok(())
    }

    fn viscous_op(&self) -> ModalOperator {
        ModalOperator {
            identity: 1.0,
            neg_laplacian: 0.5 * self.cfg.nu * self.cfg.dt,
            neg_theta2: 0.0,
            closure: WallClosure::Dirichlet,
        }
    }

    /// Advances one step of length `dt`.
    pub fn step(&self, state: &SolverState) -> Result<(SolverState, StepRecord)> {
        self.check_grid(&state.w)?;
        let cfl = self.cfl(&state.w);
        if cfl > self.cfg.cfl_max {
            return Err(HelixError::Cfl {
                cfl,
                limit: self.cfg.cfl_max,
            });
        }
        let t_mid = state.t + 0.5 * self.cfg.dt;
        let force = self.forcing.as_ref().map(|f| f(t_mid));
        let (next, iterations) = match self.cfg.scheme {
            TimeScheme::Coupled => self.step_coupled(state, force.as_ref())?,
            TimeScheme::Splitting => self.step_splitting(state, force.as_ref())?,
        };
        let g = &*self.grid;
        let dt = self.cfg.dt;
        let mid: Velocity = std::array::from_fn(|c| {
            state.w.u[c]
                .iter()
                .zip(&next.w.u[c])
                .map(|(a, b)| 0.5 * (a + b))
                .collect()
        });
        let grad_h_mid = TWO_PI * mid.iter().map(|c| g.dirichlet_energy(c)).sum::<f64>();
        let work = force.map_or(0.0, |f| {
            TWO_PI * (0..3).map(|c| g.inner(&f[c], &mid[c])).sum::<f64>()
        });
        let defect = cyl_energy(g, &next.w.u) - cyl_energy(g, &state.w.u)
            + 2.0 * self.cfg.nu * dt * grad_h_mid
            - 2.0 * dt * work;
        let rec = StepRecord {
            t_mid,
            dt,
            grad_h_mid,
            defect,
            iterations,
        };
        Ok((next, rec))
    }

    fn step_coupled(
        &self,
        state: &SolverState,
        force: Option<&Velocity>,
    ) -> Result<(SolverState, usize)> {
        let g = &*self.grid;
        let n = g.len();
        let dt = self.cfg.dt;
        let alpha = 0.5 * self.cfg.nu * dt;
        let u = &state.w.u;
        let transport: Option<Velocity> =
            self.cfg.advection_on.then(|| match &state.prev_velocity {
                Some(prev) => std::array::from_fn(|c| {
                    u[c].iter()
                        .zip(&prev[c])
                        .map(|(a, b)| 1.5 * a - 0.5 * b)
                        .collect()
                }),
                None => u.clone(),
            });

        // right-hand side: (I - α(-Δ) - dt/2 C(a)) u^n + dt f
        let mut rhs = vec![0.0; 4 * n];
        let cu = transport.as_ref().map(|a| convective_term(g, a, u));
        for c in 0..3 {
            let lap = g.laplacian_h(&u[c]);
            for i in 0..n {
                let mut v = u[c][i] + alpha * lap[i];
                if let Some(cu) = &cu {
                    v -= 0.5 * dt * cu[c][i];
                }
                if let Some(f) = force {
                    v += dt * f[c][i];
                }
                rhs[c * n + i] = v;
            }
        }

        // unknowns (u^{n+1}, s) with s = dt q
        let apply = |x: &[f64]| {
            let mut y = vec![0.0; 4 * n];
            let v: Velocity = std::array::from_fn(|c| x[c * n..(c + 1) * n].to_vec());
            let s = &x[3 * n..];
            let gs = g.helical_gradient(s);
            let cv = transport.as_ref().map(|a| convective_term(g, a, &v));
            for c in 0..3 {
                let lap = g.laplacian_h(&v[c]);
                for i in 0..n {
                    let mut r = v[c][i] - alpha * lap[i] + gs[c][i];
                    if let Some(cv) = &cv {
                        r += 0.5 * dt * cv[c][i];
                    }
                    y[c * n + i] = r;
                }
            }
            let div = g.divergence_helical(&v[0], &v[1], &v[2]);
            for i in 0..n {
                y[3 * n + i] = -div[i];
            }
            y
        };
        let op = self.viscous_op();
        let schur = self
            .schur
            .as_ref()
            .expect("coupled scheme carries its Schur blocks");
        let precond = |r: &[f64]| {
            let mut z = vec![0.0; 4 * n];
            // pressure block: exact Stokes Schur complement applied to -r_q
            let mut rq: Vec<f64> = r[3 * n..].iter().map(|v| -v).collect();
            self.poisson.remove_gauge(&mut rq);
            let mut q = schur.solve(&rq);
            self.poisson.remove_gauge(&mut q);
            let gq = g.helical_gradient(&q);
            for c in 0..3 {
                let b: Vec<f64> = (0..n).map(|i| r[c * n + i] - gq[c][i]).collect();
                let uc = g.solve_modal(op, &b);
                z[c * n..(c + 1) * n].copy_from_slice(&uc);
            }
            z[3 * n..].copy_from_slice(&q);
            z
        };
        let inner = |a: &[f64], b: &[f64]| {
            (0..4)
                .map(|c| g.inner(&a[c * n..(c + 1) * n], &b[c * n..(c + 1) * n]))
                .sum::<f64>()
        };
        // linear extrapolation of the velocity as the initial guess
        let mut x = vec![0.0; 4 * n];
        for c in 0..3 {
            for i in 0..n {
                x[c * n + i] = match &state.prev_velocity {
                    Some(prev) => 2.0 * u[c][i] - prev[c][i],
                    None => u[c][i],
                };
            }
        }
        for i in 0..n {
            x[3 * n + i] = dt * state.w.p[i];
        }
        let abs_tol = self.cfg.cg_tol * inner(&rhs, &rhs).sqrt();
        let stats = gmres(
            apply,
            precond,
            inner,
            &rhs,
            &mut x,
            abs_tol,
            60,
            self.cfg.max_iterations,
        )?;
        debug!("t={:.4} gmres iterations {}", state.t, stats.iterations);

        let mut w = state.w.clone();
        for c in 0..3 {
            w.u[c].copy_from_slice(&x[c * n..(c + 1) * n]);
        }
        let mut p: Vec<f64> = x[3 * n..].iter().map(|s| s / dt).collect();
        self.poisson.remove_gauge(&mut p);
        w.p = p;
        Ok((
            SolverState {
                t: state.t + dt,
                w,
                prev_advection: None,
                prev_velocity: Some(u.clone()),
                steps: state.steps + 1,
            },
            stats.iterations,
        ))
    }

    fn step_splitting(
        &self,
        state: &SolverState,
        force: Option<&Velocity>,
    ) -> Result<(SolverState, usize)> {
        let g = &*self.grid;
        let n = g.len();
        let dt = self.cfg.dt;
        let alpha = 0.5 * self.cfg.nu * dt;
        let u = &state.w.u;
        let adv = if self.cfg.advection_on {
            convective_term(g, u, u)
        } else {
            zeros3(n)
        };
        let extrapolated: Velocity = match &state.prev_advection {
            Some(prev) => std::array::from_fn(|c| {
                adv[c]
                    .iter()
                    .zip(&prev[c])
                    .map(|(a, b)| 1.5 * a - 0.5 * b)
                    .collect()
            }),
            None => adv.clone(),
        };
        let gp = g.helical_gradient(&state.w.p);
        let op = self.viscous_op();
        let mut star = state.w.clone();
        for c in 0..3 {
            let lap = g.laplacian_h(&u[c]);
            let b: Vec<f64> = (0..n)
                .map(|i| {
                    let f = force.map_or(0.0, |f| f[c][i]);
                    u[c][i] + alpha * lap[i] + dt * (f - extrapolated[c][i] - gp[c][i])
                })
                .collect();
            star.u[c] = g.solve_modal(op, &b);
        }
        let (mut w, stats) = project_with(
            &self.poisson,
            &star,
            self.cfg.cg_tol,
            self.cfg.max_iterations,
        )?;
        w.p = state
            .w
            .p
            .iter()
            .zip(&w.p)
            .map(|(p, phi)| p + phi / dt)
            .collect();
        Ok((
            SolverState {
                t: state.t + dt,
                w,
                prev_advection: Some(adv),
                prev_velocity: Some(u.clone()),
                steps: state.steps + 1,
            },
            stats.iterations,
        ))
    }

    /// Pressure consistent with the initial tendency, used to start the
    /// incremental correction.
    fn initial_pressure(&self, w: &SliceField) -> Result<Vec<f64>> {
        let g = &*self.grid;
        let n = g.len();
        let adv = if self.cfg.advection_on {
            helical_advection(w)
        } else {
            zeros3(n)
        };
        let force = self.forcing.as_ref().map(|f| f(0.0));
        let tendency: Velocity = std::array::from_fn(|c| {
            let lap = g.laplacian_h(&w.u[c]);
            (0..n)
                .map(|i| force.as_ref().map_or(0.0, |f| f[c][i]) - adv[c][i] + self.cfg.nu * lap[i])
                .collect()
        });
        let div = g.divergence_helical(&tendency[0], &tendency[1], &tendency[2]);
        let abs = self.cfg.cg_tol * g.l2_norm(&div);
        self.poisson
            .solve_abs(&div, abs, self.cfg.max_iterations)
            .map(|(p, _)| p)
    }

    /// Projects `w0` and builds the starting state.
    pub fn initial_state(&self, w0: &SliceField) -> Result<SolverState> {
        self.check_grid(w0)?;
        if w0.u.iter().flatten().any(|v| !v.is_finite()) {
            return Err(HelixError::Config("initial velocity is not finite".into()));
        }
        let (mut w, _) = project_with(&self.poisson, w0, self.cfg.cg_tol, 2000)?;
        let change = w.axpy(-1.0, w0).inner(&w.axpy(-1.0, w0)).sqrt();
        let size = w0.inner(w0).sqrt();
        if change > 1e-8 * size {
            warn!("initial velocity was not divergence-free; projection changed it by {:.3e} (relative)", change / size);
        }
        w.p = match self.cfg.scheme {
            TimeScheme::Splitting => self.initial_pressure(&w)?,
            TimeScheme::Coupled => vec![0.0; w.len()],
        };
        Ok(SolverState::new(w))
    }

    /// Runs to `t_end`, always returning the ledger gathered so far.
    pub fn run_recorded(&self, w0: &SliceField) -> (Result<SolverState>, EnergyLedger) {
        self.run_observed(w0, |_| {})
    }

    /// As [`Self::run_recorded`], calling `observe` on every sampled state.
    pub fn run_observed<F: FnMut(&SolverState)>(
        &self,
        w0: &SliceField,
        mut observe: F,
    ) -> (Result<SolverState>, EnergyLedger) {
        let mut ledger = EnergyLedger::new(self.cfg.nu);
        let fail = |ledger: &mut EnergyLedger, e: HelixError| {
            ledger.failure = Some(e.to_string());
            e
        };
        let steps = match self.cfg.steps() {
            Ok(s) => s,
            Err(e) => return (Err(fail(&mut ledger, e)), ledger),
        };
        let mut state = match self.initial_state(w0) {
            Ok(s) => s,
            Err(e) => return (Err(fail(&mut ledger, e)), ledger),
        };
        let mut tracker = Tracker::new(&self.grid, self.cfg.nu, &state.w);
        ledger.rows.push(tracker.row(0.0, &state.w));
        observe(&state);
        for k in 1..=steps {
            let (next, rec) = match self.step(&state) {
                Ok(r) => r,
                Err(e) => return (Err(fail(&mut ledger, e)), ledger),
            };
            tracker.advance(&rec, &next.w);
            ledger.steps.push(rec);
            state = next;
            if k % self.cfg.checkpoint_every == 0 || k == steps {
                ledger.rows.push(tracker.row(state.t, &state.w));
                observe(&state);
            }
        }
        (Ok(state), ledger)
    }

    pub fn run(&self, w0: &SliceField) -> Result<(SolverState, EnergyLedger)> {
        let (state, ledger) = self.run_recorded(w0);
        state.map(|s| (s, ledger))
    }

    /// Runs `u0` and `v0` side by side on two threads and records
    /// `‖u - v‖²` on the common ledger times.
    pub fn run_pair(&self, u0: &SliceField, v0: &SliceField) -> Result<PairRun> {
        let collect = |w0: &SliceField| {
            let mut snaps = Vec::new();
            let (state, ledger) = self.run_observed(w0, |s| snaps.push(s.w.clone()));
            state.map(|s| (s.w, ledger, snaps))
        };
        let (a, b) = std::thread::scope(|scope| {
            let other = scope.spawn(|| collect(v0));
            let a = collect(u0);
            (a, other.join().expect("pair worker panicked"))
        });
        let (final_u, ledger_u, snaps_u) = a?;
        let (final_v, ledger_v, snaps_v) = b?;
        let mut diff = DifferenceLedger::default();
        for ((row, su), sv) in ledger_u.rows.iter().zip(&snaps_u).zip(&snaps_v) {
            let d = su.axpy(-1.0, sv);
            diff.t.push(row.t);
            diff.diff_sq.push(TWO_PI * d.inner(&d));
        }
        Ok(PairRun {
            ledger_u,
            ledger_v,
            diff,
            final_u,
            final_v,
        })
    }
}

/// Two runs on one grid and time axis.
#[derive(Clone, Debug)]
pub struct PairRun {
    pub ledger_u: EnergyLedger,
    pub ledger_v: EnergyLedger,
    pub diff: DifferenceLedger,
    pub final_u: SliceField,
    pub final_v: SliceField,
}

/// Per-state quadratic quantities, cylinder-scaled.
struct Snapshot {
    energy: f64,
    grad_h: f64,
    d3: f64,
    /// `‖∇_h u‖² + ‖Δ_h u‖² + ‖∇_h D3 u‖²`.
    h1_density: f64,
}

impl Snapshot {
    fn of(g: &DiskGrid, w: &SliceField) -> Self {
        let d3v = vertical_derivative_vec(w);
        let mut grad_h = 0.0;
        let mut lap_sq = 0.0;
        let mut d3 = 0.0;
        let mut grad_d3 = 0.0;
        for c in 0..3 {
            let lap = g.laplacian_h(&w.u[c]);
            grad_h += (-g.inner(&w.u[c], &lap)).max(0.0);
            lap_sq += g.inner(&lap, &lap);
            d3 += g.inner(&d3v[c], &d3v[c]);
            grad_d3 += g.dirichlet_energy(&d3v[c]);
        }
        Self {
            energy: cyl_energy(g, &w.u),
            grad_h: TWO_PI * grad_h,
            d3: TWO_PI * d3,
            h1_density: TWO_PI * (grad_h + lap_sq + grad_d3),
        }
    }
}

/// Running time integrals for the ledger.
struct Tracker {
    grid: Arc<DiskGrid>,
    nu: f64,
    current: Snapshot,
    gh: f64,
    gfull: f64,
    gh_h1: f64,
}

impl Tracker {
    fn new(grid: &Arc<DiskGrid>, nu: f64, w: &SliceField) -> Self {
        Self {
            grid: grid.clone(),
            nu,
            current: Snapshot::of(grid, w),
            gh: 0.0,
            gfull: 0.0,
            gh_h1: 0.0,
        }
    }

    fn advance(&mut self, rec: &StepRecord, w: &SliceField) {
        let next = Snapshot::of(&self.grid, w);
        self.gh += 2.0 * self.nu * rec.dt * rec.grad_h_mid;
        self.gfull += rec.dt * (rec.grad_h_mid + 0.5 * (self.current.d3 + next.d3));
        self.gh_h1 += self.nu * rec.dt * 0.5 * (self.current.h1_density + next.h1_density);
        self.current = next;
    }

    fn row(&self, t: f64, w: &SliceField) -> LedgerRow {
        let s = &self.current;
        let div = divergence(w);
        LedgerRow {
            t,
            energy: s.energy,
            gh: self.gh,
            gfull: self.gfull,
            h1: s.energy + s.grad_h + s.d3,
            gh_h1: self.gh_h1,
            div_res: TWO_PI.sqrt() * self.grid.l2_norm(&div),
        }
    }
}

/// One step with a freshly built solver.
pub fn step(state: &SolverState, cfg: &SolverConfig) -> Result<SolverState> {
    Solver::new(cfg.clone(), state.w.grid.clone())?
        .step(state)
        .map(|(s, _)| s)
}

/// Runs `cfg` from `w0` and returns the final state with its ledger.
pub fn run(cfg: &SolverConfig, w0: &SliceField) -> Result<(SolverState, EnergyLedger)> {
    Solver::new(cfg.clone(), w0.grid.clone())?.run(w0)
}

/// Final state of the manufactured solution `m`, forced, on an `n x n` grid.
pub fn manufactured_run(
    m: &Arc<Manufactured>,
    n: usize,
    dt: f64,
    t_end: f64,
) -> Result<SliceField> {
    let g = Arc::new(DiskGrid::new(n, n)?);
    let cfg = SolverConfig {
        nu: m.nu,
        dt,
        t_end,
        cg_tol: 1e-12,
        checkpoint_every: usize::MAX,
        ..SolverConfig::default()
    };
    let (mm, gg) = (m.clone(), g.clone());
    let forcing: Arc<Forcing> = Arc::new(move |t| mm.forcing_at(&gg, t));
    let solver = Solver::new(cfg, g.clone())?.with_forcing(forcing);
    Ok(solver.run(&m.exact(g, 0.0))?.0.w)
}

/// Errors and observed orders of a refinement sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrderStudy {
    /// Grid size or time step of each level.
    pub levels: Vec<f64>,
    pub errors: Vec<f64>,
    /// `log2` of successive error ratios; levels must halve.
    pub orders: Vec<f64>,
}

impl OrderStudy {
    fn from_errors(levels: Vec<f64>, errors: Vec<f64>) -> Self {
        let orders = errors.windows(2).map(|e| (e[0] / e[1]).log2()).collect();
        Self {
            levels,
            errors,
            orders,
        }
    }
}

fn slice_distance(a: &SliceField, b: &SliceField) -> f64 {
    let d = a.axpy(-1.0, b);
    d.inner(&d).sqrt()
}

/// Error against the exact solution at `t_end` on each grid in `sizes`.
pub fn spatial_order(
    m: &Arc<Manufactured>,
    sizes: &[usize],
    dt: f64,
    t_end: f64,
) -> Result<OrderStudy> {
    let mut errors = Vec::new();
    for &n in sizes {
        let w = manufactured_run(m, n, dt, t_end)?;
        errors.push(slice_distance(&w, &m.exact(w.grid.clone(), t_end)));
    }
    Ok(OrderStudy::from_errors(
        sizes.iter().map(|&n| n as f64).collect(),
        errors,
    ))
}

/// Self-convergence in time: distances between runs at successive steps in
/// `dts` on one `n x n` grid, which isolates the temporal error.
pub fn temporal_order(
    m: &Arc<Manufactured>,
    n: usize,
    dts: &[f64],
    t_end: f64,
) -> Result<OrderStudy> {
    let runs = dts
        .iter()
        .map(|&dt| manufactured_run(m, n, dt, t_end))
        .collect::<Result<Vec<_>>>()?;
    let diffs = runs
        .windows(2)
        .map(|w| slice_distance(&w[0], &w[1]))
        .collect();
    Ok(OrderStudy::from_errors(dts[1..].to_vec(), diffs))
}

/// One Stokes step of the discrete ground state: the measured energy ratio
/// and the Crank–Nicolson factor `((1 - a)/(1 + a))²`, `a = ν λ1 dt / 2`.
pub fn eigen_step_factor(grid: Arc<DiskGrid>, nu: f64, dt: f64) -> Result<(f64, f64)> {
    let (lambda, w) = stokes_eigenfield(grid.clone())?;
    let cfg = SolverConfig {
        nu,
        dt,
        t_end: dt,
        cg_tol: 1e-13,
        advection_on: false,
        ..SolverConfig::default()
    };
    let solver = Solver::new(cfg, grid)?;
    let s0 = solver.initial_state(&w)?;
    let (s1, _) = solver.step(&s0)?;
    let a = 0.5 * nu * lambda * dt;
    Ok((
        s1.w.inner(&s1.w) / s0.w.inner(&s0.w),
        ((1.0 - a) / (1.0 + a)).powi(2),
    ))
}
