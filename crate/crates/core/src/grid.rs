//! Polar discretisation of the unit disk.
//!
//! Radial nodes are staggered, `r_j = (j + 1/2) Δr`, so no node sits on the
//! pole. Radial differences average face gradients weighted by the face
//! radius, and the pole face has radius zero, so no stencil reaches across
//! the pole. Interpolation below `r_0` reads the ring at `θ + π`, which is
//! why `ntheta` must be even.
//! The wall `r = 1` lies half a cell beyond the last ring and is handled with
//! a ghost value.
//!
//! Fields are flat `Vec<f64>` in ring-major order, `i = j * ntheta + k`.
//! Angular derivatives are Fourier-exact; radial ones are second order.

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{HelixError, Result};
use crate::spectral::AngularFft;

/// Ghost closure used at `r = 1` by radial differences.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum WallClosure {
    /// Ghost `f_nr = -f_{nr-1}`: the field vanishes on the wall.
    Dirichlet,
    /// Ghost `f_nr = f_{nr-1}`: zero normal derivative.
    Neumann,
    /// Second-order one-sided difference, no boundary condition assumed.
    OneSided,
}

/// A constant-coefficient operator `a I + b (-Δ_h) + c (-∂²θ)` that is
/// diagonal in the angular Fourier modes and tridiagonal in `r`.
#[derive(Clone, Copy, Debug)]
pub struct ModalOperator {
    pub identity: f64,
    pub neg_laplacian: f64,
    pub neg_theta2: f64,
    pub closure: WallClosure,
}

#[derive(Clone, Debug)]
pub struct DiskGrid {
    nr: usize,
    ntheta: usize,
    dr: f64,
    dtheta: f64,
    radii: Vec<f64>,
    inv_r: Vec<f64>,
    cos_t: Vec<f64>,
    sin_t: Vec<f64>,
    ring_weight: Vec<f64>,
    fft: AngularFft,
}

impl DiskGrid {
    pub fn new(nr: usize, ntheta: usize) -> Result<Self> {
        if nr < 3 {
            return Err(HelixError::InvalidGrid(format!(
                "nr = {nr}, need at least 3"
            )));
        }
        if ntheta < 8 || ntheta % 2 != 0 {
            return Err(HelixError::InvalidGrid(format!(
                "ntheta = {ntheta}, need an even count >= 8"
            )));
        }
        let dr = 1.0 / nr as f64;
        let dtheta = 2.0 * PI / ntheta as f64;
        let radii: Vec<f64> = (0..nr).map(|j| (j as f64 + 0.5) * dr).collect();
        let inv_r = radii.iter().map(|r| 1.0 / r).collect();
        let cos_t = (0..ntheta).map(|k| (k as f64 * dtheta).cos()).collect();
        let sin_t = (0..ntheta).map(|k| (k as f64 * dtheta).sin()).collect();
        let ring_weight = radii.iter().map(|r| r * dr * dtheta).collect();
        Ok(Self {
            nr,
            ntheta,
            dr,
            dtheta,
            radii,
            inv_r,
            cos_t,
            sin_t,
            ring_weight,
            fft: AngularFft::new(ntheta),
        })
    }

    pub fn nr(&self) -> usize {
        self.nr
    }

    pub fn ntheta(&self) -> usize {
        self.ntheta
    }

    pub fn len(&self) -> usize {
        self.nr * self.ntheta
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn dr(&self) -> f64 {
        self.dr
    }

    pub fn dtheta(&self) -> f64 {
        self.dtheta
    }

    pub fn radii(&self) -> &[f64] {
        &self.radii
    }

    pub fn radius(&self, j: usize) -> f64 {
        self.radii[j]
    }

    pub fn theta(&self, k: usize) -> f64 {
        k as f64 * self.dtheta
    }

    #[inline]
    pub fn index(&self, j: usize, k: usize) -> usize {
        j * self.ntheta + k
    }

    /// Ring and angle index of a flat node index.
    #[inline]
    pub fn ring_of(&self, i: usize) -> (usize, usize) {
        (i / self.ntheta, i % self.ntheta)
    }

    /// Quadrature weight `r_j Δr Δθ` of every node.
    pub fn weights(&self) -> Vec<f64> {
        (0..self.len())
            .map(|i| self.ring_weight[i / self.ntheta])
            .collect()
    }

    #[inline]
    /// Quadrature weight shared by every node of ring `j`.
    pub fn ring_weight(&self, j: usize) -> f64 {
        self.ring_weight[j]
    }

    pub fn weight(&self, i: usize) -> f64 {
        self.ring_weight[i / self.ntheta]
    }

    pub fn fft(&self) -> &AngularFft {
        &self.fft
    }

    #[inline]
    pub fn cos_sin(&self, i: usize) -> (f64, f64) {
        let k = i % self.ntheta;
        (self.cos_t[k], self.sin_t[k])
    }

    #[inline]
    pub fn inv_radius(&self, i: usize) -> f64 {
        self.inv_r[i / self.ntheta]
    }

    /// Cartesian coordinates `(x1, x2)` of node `i`.
    pub fn cartesian(&self, i: usize) -> (f64, f64) {
        let (j, _) = self.ring_of(i);
        let (c, s) = self.cos_sin(i);
        (self.radii[j] * c, self.radii[j] * s)
    }

    /// Samples `f(x1, x2)` at every node.
    pub fn sample<F: Fn(f64, f64) -> f64>(&self, f: F) -> Vec<f64> {
        (0..self.len())
            .map(|i| {
                let (x, y) = self.cartesian(i);
                f(x, y)
            })
            .collect()
    }

    pub fn zeros(&self) -> Vec<f64> {
        vec![0.0; self.len()]
    }

    fn check(&self, f: &[f64]) {
        assert_eq!(f.len(), self.len(), "field does not match the grid");
    }

    // ---------------------------------------------------------------
    // quadrature

    /// `Σ f_i w_i`; exact (to rounding) for nonzero angular harmonics.
    pub fn integrate(&self, f: &[f64]) -> f64 {
        self.check(f);
        f.chunks(self.ntheta)
            .zip(&self.ring_weight)
            .map(|(ring, w)| w * ring.iter().sum::<f64>())
            .sum()
    }

    pub fn inner(&self, f: &[f64], g: &[f64]) -> f64 {
        self.check(f);
        self.check(g);
        f.chunks(self.ntheta)
            .zip(g.chunks(self.ntheta))
            .zip(&self.ring_weight)
            .map(|((a, b), w)| w * a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>())
            .sum()
    }

    pub fn l2_norm(&self, f: &[f64]) -> f64 {
        self.inner(f, f).max(0.0).sqrt()
    }

    pub fn mean(&self, f: &[f64]) -> f64 {
        self.integrate(f) / PI
    }

    pub fn remove_mean(&self, f: &mut [f64]) {
        let m = self.mean(f);
        f.iter_mut().for_each(|x| *x -= m);
    }

    // ---------------------------------------------------------------
    // differential operators

    pub fn d_theta(&self, f: &[f64]) -> Vec<f64> {
        self.check(f);
        self.fft.derivative(f)
    }

    pub fn d2_theta(&self, f: &[f64]) -> Vec<f64> {
        self.check(f);
        self.fft.second_derivative(f)
    }

    /// Stencil of [`Self::radial_derivative`] on ring `j`: coefficients of
    /// `f_{j-1}`, `f_j`, `f_{j+1}`. Face gradients `(f_{j+1} - f_j)/Δr` are
    /// averaged with weights `r_{j±1/2} / (2 r_j)`; the pole face has radius
    /// zero, so ring 0 needs no neighbour across the pole.
    pub(crate) fn radial_stencil(&self, j: usize, closure: WallClosure) -> (f64, f64, f64) {
        let r = self.radii[j];
        let up = (r + 0.5 * self.dr) / (2.0 * r * self.dr);
        let lo = (r - 0.5 * self.dr) / (2.0 * r * self.dr);
        if j + 1 < self.nr {
            return (-lo, lo - up, up);
        }
        match closure {
            WallClosure::Dirichlet => (-lo, lo - 2.0 * up, 0.0),
            WallClosure::Neumann => (-lo, lo, 0.0),
            WallClosure::OneSided => unreachable!("handled by the caller"),
        }
    }

    /// `∂r f` with the given wall closure.
    pub fn radial_derivative(&self, f: &[f64], closure: WallClosure) -> Vec<f64> {
        self.check(f);
        let (nr, nt) = (self.nr, self.ntheta);
        let mut out = vec![0.0; f.len()];
        for j in 0..nr {
            if j + 1 == nr && closure == WallClosure::OneSided {
                let h2 = 0.5 / self.dr;
                for k in 0..nt {
                    let i = j * nt + k;
                    out[i] = (3.0 * f[i] - 4.0 * f[i - nt] + f[i - 2 * nt]) * h2;
                }
                continue;
            }
            let (lo, d, up) = self.radial_stencil(j, closure);
            for k in 0..nt {
                let i = j * nt + k;
                let mut v = d * f[i];
                if j > 0 {
                    v += lo * f[i - nt];
                }
                if j + 1 < nr {
                    v += up * f[i + nt];
                }
                out[i] = v;
            }
        }
        out
    }

    /// Weighted adjoint `W⁻¹ Dᵀ W g` of [`Self::radial_derivative`]. Its
    /// negative is the conservative divergence `(1/r) ∂r (r g)`.
    pub fn radial_derivative_adjoint(&self, g: &[f64], closure: WallClosure) -> Vec<f64> {
        self.check(g);
        assert!(
            closure != WallClosure::OneSided,
            "adjoint is only provided for ghost closures"
        );
        let (nr, nt) = (self.nr, self.ntheta);
        let mut out = vec![0.0; g.len()];
        for j in 0..nr {
            let (lo, d, up) = self.radial_stencil(j, closure);
            let w = self.ring_weight[j];
            for k in 0..nt {
                let i = j * nt + k;
                let v = w * g[i];
                out[i] += d * v;
                if j > 0 {
                    out[i - nt] += lo * v;
                }
                if j + 1 < nr {
                    out[i + nt] += up * v;
                }
            }
        }
        for (j, ring) in out.chunks_mut(nt).enumerate() {
            let iw = 1.0 / self.ring_weight[j];
            ring.iter_mut().for_each(|o| *o *= iw);
        }
        out
    }

    /// Horizontal gradient `(∂1 f, ∂2 f)` with a one-sided wall closure.
    pub fn grad_h(&self, f: &[f64]) -> [Vec<f64>; 2] {
        self.gradient(f, WallClosure::OneSided)
    }

    /// Horizontal gradient through the polar chain rule.
    pub fn gradient(&self, f: &[f64], closure: WallClosure) -> [Vec<f64>; 2] {
        let fr = self.radial_derivative(f, closure);
        let ft = self.d_theta(f);
        self.polar_to_cartesian(&fr, &ft)
    }

    /// Combines `∂r f` and `∂θ f` into Cartesian components.
    pub fn polar_to_cartesian(&self, fr: &[f64], ft: &[f64]) -> [Vec<f64>; 2] {
        let nt = self.ntheta;
        let mut g1 = vec![0.0; fr.len()];
        let mut g2 = vec![0.0; fr.len()];
        for j in 0..self.nr {
            let ir = self.inv_r[j];
            for k in 0..nt {
                let i = j * nt + k;
                let (c, s) = (self.cos_t[k], self.sin_t[k]);
                let a = ft[i] * ir;
                g1[i] = c * fr[i] - s * a;
                g2[i] = s * fr[i] + c * a;
            }
        }
        [g1, g2]
    }

    /// Weighted adjoint of [`Self::gradient`] plus an optional extra angular
    /// term: returns `G†(g1, g2) - ∂θ g3`.
    pub fn gradient_adjoint(
        &self,
        g1: &[f64],
        g2: &[f64],
        g3: Option<&[f64]>,
        closure: WallClosure,
    ) -> Vec<f64> {
        let n = self.len();
        let nt = self.ntheta;
        let mut radial = vec![0.0; n];
        let mut tang = vec![0.0; n];
        for j in 0..self.nr {
            let ir = self.inv_r[j];
            for k in 0..nt {
                let i = j * nt + k;
                let (c, s) = (self.cos_t[k], self.sin_t[k]);
                radial[i] = c * g1[i] + s * g2[i];
                tang[i] = (-s * g1[i] + c * g2[i]) * ir;
            }
        }
        if let Some(g3) = g3 {
            tang.iter_mut().zip(g3).for_each(|(t, v)| *t += v);
        }
        let mut out = self.radial_derivative_adjoint(&radial, closure);
        let dt = self.d_theta(&tang);
        out.iter_mut().zip(dt).for_each(|(o, d)| *o -= d);
        out
    }

    /// Helical gradient `(∂1 p, ∂2 p, ∂θ p)` with the Neumann closure used for
    /// pressures.
    pub fn helical_gradient(&self, p: &[f64]) -> [Vec<f64>; 3] {
        let pr = self.radial_derivative(p, WallClosure::Neumann);
        let pt = self.d_theta(p);
        let [g1, g2] = self.polar_to_cartesian(&pr, &pt);
        [g1, g2, pt]
    }

    /// Helical divergence `∂1 u1 + ∂2 u2 + ∂θ u3`, built as the negative
    /// weighted adjoint of [`Self::helical_gradient`] so that
    /// `⟨div u, p⟩ = -⟨u, ∇p⟩` holds exactly for every pair.
    pub fn divergence_helical(&self, u1: &[f64], u2: &[f64], u3: &[f64]) -> Vec<f64> {
        let mut d = self.gradient_adjoint(u1, u2, Some(u3), WallClosure::Neumann);
        d.iter_mut().for_each(|v| *v = -*v);
        d
    }

    /// Compact polar Laplacian `(1/r)∂r(r ∂r f) + (1/r²)∂²θ f` for fields
    /// vanishing on the wall. The flux through the pole face carries weight
    /// `r = 0`, so no cross-pole coupling is needed.
    pub fn laplacian_h(&self, f: &[f64]) -> Vec<f64> {
        self.laplacian_with(f, WallClosure::Dirichlet)
    }

    pub fn laplacian_with(&self, f: &[f64], closure: WallClosure) -> Vec<f64> {
        self.check(f);
        let (nr, nt) = (self.nr, self.ntheta);
        let mut out = self.d2_theta(f);
        for j in 0..nr {
            let (lo, up) = self.radial_coeffs(j);
            let ir2 = self.inv_r[j] * self.inv_r[j];
            for k in 0..nt {
                let i = j * nt + k;
                let down = if j == 0 { 0.0 } else { lo * (f[i] - f[i - nt]) };
                let upflux = if j + 1 < nr {
                    up * (f[i + nt] - f[i])
                } else {
                    match closure {
                        WallClosure::Dirichlet => -2.0 * up * f[i],
                        WallClosure::Neumann => 0.0,
                        WallClosure::OneSided => {
                            panic!("compact Laplacian needs a ghost closure")
                        }
                    }
                };
                out[i] = out[i] * ir2 + upflux - down;
            }
        }
        out
    }

    /// `(r_{j-1/2}, r_{j+1/2}) / (r_j Δr²)`.
    fn radial_coeffs(&self, j: usize) -> (f64, f64) {
        let r = self.radii[j];
        let d2 = self.dr * self.dr;
        let lo = (r - 0.5 * self.dr) / (r * d2);
        let up = (r + 0.5 * self.dr) / (r * d2);
        (lo, up)
    }

    /// Discrete Dirichlet form `-⟨f, Δ_h f⟩`, the squared horizontal gradient
    /// norm used by every energy and Poincaré statement.
    pub fn dirichlet_energy(&self, f: &[f64]) -> f64 {
        let lap = self.laplacian_h(f);
        (-self.inner(f, &lap)).max(0.0)
    }

    // ---------------------------------------------------------------
    // modal solves

    /// Solves `op x = rhs` exactly: FFT in θ, Thomas sweep in r per mode.
    pub fn solve_modal(&self, op: ModalOperator, rhs: &[f64]) -> Vec<f64> {
        self.check(rhs);
        let (nr, nt) = (self.nr, self.ntheta);
        let mut spec = self.fft.forward(rhs);
        let mut bands = [vec![0.0; nr], vec![0.0; nr], vec![0.0; nr]];
        let mut col = vec![Complex64::new(0.0, 0.0); nr];
        for k in 0..nt {
            self.modal_bands(op, k, &mut bands);
            for j in 0..nr {
                col[j] = spec[j * nt + k];
            }
            thomas(&bands[0], &bands[1], &bands[2], &mut col);
            for j in 0..nr {
                spec[j * nt + k] = col[j];
            }
        }
        self.fft.inverse(spec)
    }

    /// Sub-, main and super-diagonal of `op` restricted to angular bin `k`.
    pub(crate) fn modal_bands(&self, op: ModalOperator, k: usize, bands: &mut [Vec<f64>; 3]) {
        let sigma = match op.closure {
            WallClosure::Dirichlet => -1.0,
            WallClosure::Neumann => 1.0,
            WallClosure::OneSided => panic!("modal solve needs a ghost closure"),
        };
        let nr = self.nr;
        let kk = self.fft.second_symbol(k);
        let b = op.neg_laplacian;
        for j in 0..nr {
            let (lo, up) = self.radial_coeffs(j);
            let lo = if j == 0 { 0.0 } else { lo };
            let ir2 = self.inv_r[j] * self.inv_r[j];
            let mut d = op.identity + b * (lo + kk * ir2) + op.neg_theta2 * kk;
            if j + 1 < nr {
                d += b * up;
                bands[2][j] = -b * up;
            } else {
                d += b * up * (1.0 - sigma);
                bands[2][j] = 0.0;
            }
            bands[0][j] = -b * lo;
            bands[1][j] = d;
        }
    }

    // ---------------------------------------------------------------
    // interpolation

    /// Bilinear interpolation in `(r, θ)`, periodic in θ, reading across the
    /// pole below `r_0` and towards the wall value `wall` above `r_{nr-1}`.
    pub fn interpolate(&self, f: &[f64], r: f64, theta: f64, wall: f64) -> f64 {
        let s = r / self.dr - 0.5;
        if s < 0.0 {
            let a = self.ring_value(f, 0, theta + PI);
            let b = self.ring_value(f, 0, theta);
            let t = s + 1.0;
            (1.0 - t) * a + t * b
        } else if s >= (self.nr - 1) as f64 {
            let a = self.ring_value(f, self.nr - 1, theta);
            let t = ((s - (self.nr - 1) as f64) / 0.5).min(1.0);
            (1.0 - t) * a + t * wall
        } else {
            let j = s.floor() as usize;
            let t = s - j as f64;
            (1.0 - t) * self.ring_value(f, j, theta) + t * self.ring_value(f, j + 1, theta)
        }
    }

    fn ring_value(&self, f: &[f64], j: usize, theta: f64) -> f64 {
        let u = (theta / self.dtheta).rem_euclid(self.ntheta as f64);
        let k0 = (u.floor() as usize) % self.ntheta;
        let t = u - u.floor();
        let k1 = (k0 + 1) % self.ntheta;
        let base = j * self.ntheta;
        (1.0 - t) * f[base + k0] + t * f[base + k1]
    }
}

/// Tridiagonal solve with real coefficients and a complex right-hand side.
pub(crate) fn thomas(sub: &[f64], diag: &[f64], sup: &[f64], x: &mut [Complex64]) {
    let n = diag.len();
    let mut c = vec![0.0; n];
    let mut beta = diag[0];
    c[0] = sup[0] / beta;
    x[0] /= beta;
    for j in 1..n {
        beta = diag[j] - sub[j] * c[j - 1];
        c[j] = sup[j] / beta;
        let prev = x[j - 1];
        x[j] = (x[j] - prev * sub[j]) / beta;
    }
    for j in (0..n - 1).rev() {
        let next = x[j + 1];
        x[j] -= next * c[j];
    }
}

/// Smallest eigenpair of the discrete Dirichlet operator `-Δ_h`, by inverse
/// power iteration with a Rayleigh-quotient stopping test.
pub fn dirichlet_ground_state(
    grid: &DiskGrid,
    rel_tol: f64,
    max_iter: usize,
) -> Result<(f64, Vec<f64>)> {
    let op = ModalOperator {
        identity: 0.0,
        neg_laplacian: 1.0,
        neg_theta2: 0.0,
        closure: WallClosure::Dirichlet,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
    let mut x: Vec<f64> = (0..grid.len()).map(|_| rng.gen_range(0.5..1.5)).collect();
    let mut lambda = f64::INFINITY;
    for _ in 0..max_iter {
        let mut y = grid.solve_modal(op, &x);
        let norm = grid.l2_norm(&y);
        y.iter_mut().for_each(|v| *v /= norm);
        let ay = grid.laplacian_h(&y);
        let next = -grid.inner(&y, &ay);
        x = y;
        if (next - lambda).abs() <= rel_tol * next.abs() {
            return Ok((next, x));
        }
        lambda = next;
    }
    Err(HelixError::NotConverged {
        solver: "inverse power iteration",
        iterations: max_iter,
        residual: lambda,
    })
}

/// Discrete Poincaré constant `c0 = 1/λ1` for no-slip fields on the disk.
pub fn poincare_constant(grid: &DiskGrid) -> Result<f64> {
    dirichlet_ground_state(grid, 1e-8, 200).map(|(l, _)| 1.0 / l)
}

#[cfg(test)]
mod tests {
    use super::*;

    const J01: f64 = 2.404_825_557_695_773;

    fn bessel_j0(x: f64) -> f64 {
        // power series, adequate for |x| < 3
        let mut term = 1.0;
        let mut sum = 1.0;
        let q = -0.25 * x * x;
        for m in 1..40 {
            term *= q / (m as f64 * m as f64);
            sum += term;
        }
        sum
    }

    #[test]
    fn rejects_bad_extents() {
        assert!(DiskGrid::new(2, 16).is_err());
        assert!(DiskGrid::new(8, 6).is_err());
        assert!(DiskGrid::new(8, 15).is_err());
    }

    #[test]
    fn weights_sum_to_disk_area() {
        for (nr, nt) in [(8, 8), (17, 24), (64, 64)] {
            let g = DiskGrid::new(nr, nt).unwrap();
            let ones = vec![1.0; g.len()];
            assert!((g.integrate(&ones) - PI).abs() < 1e-10 * PI);
        }
    }

    #[test]
    fn integrals_of_simple_profiles() {
        let g = DiskGrid::new(64, 32).unwrap();
        let f = g.sample(|x, y| 1.0 - x * x - y * y);
        assert!((g.integrate(&f) - PI / 2.0).abs() < 1e-3);
        let c = g.sample(|x, y| x / (x * x + y * y).sqrt());
        assert!(g.integrate(&c).abs() < 1e-13);
        let f4: Vec<f64> = f.iter().map(|v| v.powi(4)).collect();
        assert!((g.integrate(&f4) - PI / 5.0).abs() < 1e-3);
    }

    #[test]
    fn gradient_of_polynomials() {
        let g = DiskGrid::new(32, 32).unwrap();
        let f = g.sample(|x, _| x);
        let [gx, gy] = g.grad_h(&f);
        for i in 0..g.len() {
            assert!((gx[i] - 1.0).abs() < 1e-10 && gy[i].abs() < 1e-10);
        }
        let konst = vec![2.5; g.len()];
        let [cx, cy] = g.grad_h(&konst);
        assert!(cx.iter().chain(&cy).all(|v| v.abs() < 1e-12));
        let mut errs = vec![];
        for n in [16, 32, 64] {
            let g = DiskGrid::new(n, 32).unwrap();
            let f = g.sample(|x, y| x * x + y * y);
            let [gx, gy] = g.grad_h(&f);
            let ex: Vec<f64> = (0..g.len())
                .map(|i| gx[i] - 2.0 * g.cartesian(i).0)
                .collect();
            let ey: Vec<f64> = (0..g.len())
                .map(|i| gy[i] - 2.0 * g.cartesian(i).1)
                .collect();
            errs.push(g.l2_norm(&ex).hypot(g.l2_norm(&ey)));
        }
        // the face-averaged stencil is first order on the pole ring only
        let order = (errs[1] / errs[2]).log2();
        assert!(order > 1.8, "{errs:?}");
    }

    #[test]
    fn laplacian_of_bessel_mode_converges() {
        // The wall ghost leaves an O(1) truncation error on the last ring, so
        // the meaningful rate is that of the solution of the Dirichlet problem.
        let mut errs = vec![];
        for n in [16, 32, 64] {
            let g = DiskGrid::new(n, 16).unwrap();
            let exact = g.sample(|x, y| bessel_j0(J01 * (x * x + y * y).sqrt()));
            let rhs: Vec<f64> = exact.iter().map(|v| J01 * J01 * v).collect();
            let op = ModalOperator {
                identity: 0.0,
                neg_laplacian: 1.0,
                neg_theta2: 0.0,
                closure: WallClosure::Dirichlet,
            };
            let u = g.solve_modal(op, &rhs);
            let e: Vec<f64> = u.iter().zip(&exact).map(|(a, b)| a - b).collect();
            errs.push(g.l2_norm(&e));
        }
        let order = (errs[1] / errs[2]).log2();
        assert!(order > 1.8, "{errs:?}");
    }

    #[test]
    fn helical_divergence_is_adjoint_to_gradient() {
        let g = DiskGrid::new(12, 16).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut rnd = || {
            (0..g.len())
                .map(|_| rng.gen_range(-1.0..1.0))
                .collect::<Vec<f64>>()
        };
        let (u1, u2, u3, p) = (rnd(), rnd(), rnd(), rnd());
        let div = g.divergence_helical(&u1, &u2, &u3);
        let gp = g.helical_gradient(&p);
        let lhs = g.inner(&div, &p);
        let rhs = -(g.inner(&u1, &gp[0]) + g.inner(&u2, &gp[1]) + g.inner(&u3, &gp[2]));
        assert!((lhs - rhs).abs() < 1e-10 * lhs.abs().max(1.0));
        // divergence of a smooth no-slip field converges away from the wall stencil
        let g = DiskGrid::new(64, 32).unwrap();
        let w = |x: f64, y: f64| 1.0 - x * x - y * y;
        let u1 = g.sample(|x, y| w(x, y) * y);
        let u2 = g.sample(|x, y| w(x, y) * x * x);
        let u3 = g.zeros();
        let div = g.divergence_helical(&u1, &u2, &u3);
        let err = (0..g.len())
            .map(|i| {
                let (x, y) = g.cartesian(i);
                (div[i] - (-2.0 * x * y - 2.0 * y * x * x)).abs()
            })
            .fold(0.0, f64::max);
        assert!(err < 0.05, "{err}");
    }

    #[test]
    fn laplacian_of_interior_polynomials() {
        let g = DiskGrid::new(32, 16).unwrap();
        let f = g.sample(|x, y| x * x + y * y);
        let lap = g.laplacian_h(&f);
        let lin = g.sample(|x, _| x);
        let lapl = g.laplacian_h(&lin);
        for j in 0..g.nr() - 1 {
            for k in 0..g.ntheta() {
                let i = g.index(j, k);
                assert!((lap[i] - 4.0).abs() < 1e-9);
                assert!(lapl[i].abs() < 1e-9);
            }
        }
    }

    fn dirichlet_field(g: &DiskGrid, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let a: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
        g.sample(|x, y| {
            (1.0 - x * x - y * y)
                * (a[0] + a[1] * x + a[2] * y + a[3] * x * y + a[4] * x * x + a[5] * y * y * y)
        })
    }

    #[test]
    fn laplacian_is_symmetric_and_negative() {
        let g = DiskGrid::new(20, 16).unwrap();
        let f = dirichlet_field(&g, 1);
        let h = dirichlet_field(&g, 2);
        let a = g.inner(&f, &g.laplacian_h(&h));
        let b = g.inner(&h, &g.laplacian_h(&f));
        assert!((a - b).abs() < 1e-10 * a.abs().max(1.0));
        assert!(g.inner(&f, &g.laplacian_h(&f)) <= 0.0);
    }

    #[test]
    fn dirichlet_form_matches_collocated_gradient() {
        let mut errs = vec![];
        for n in [16, 32, 64, 128] {
            let g = DiskGrid::new(n, 32).unwrap();
            let f = dirichlet_field(&g, 3);
            let [gx, gy] = g.grad_h(&f);
            let collocated = g.inner(&gx, &gx) + g.inner(&gy, &gy);
            errs.push((g.dirichlet_energy(&f) - collocated).abs() / collocated);
        }
        assert!(errs.iter().all(|&e| e < 5e-3), "{errs:?}");
        assert!(errs[3] < 1e-4, "{errs:?}");
    }

    #[test]
    fn radial_adjoint_is_exact_transpose() {
        let g = DiskGrid::new(10, 8).unwrap();
        let f = dirichlet_field(&g, 4);
        let h = g.sample(|x, y| (x + 2.0 * y).sin());
        for c in [WallClosure::Dirichlet, WallClosure::Neumann] {
            let a = g.inner(&h, &g.radial_derivative(&f, c));
            let b = g.inner(&g.radial_derivative_adjoint(&h, c), &f);
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn modal_solve_inverts_laplacian() {
        let g = DiskGrid::new(12, 16).unwrap();
        let f = dirichlet_field(&g, 5);
        let op = ModalOperator {
            identity: 0.3,
            neg_laplacian: 0.7,
            neg_theta2: 0.0,
            closure: WallClosure::Dirichlet,
        };
        let x = g.solve_modal(op, &f);
        let lap = g.laplacian_h(&x);
        for i in 0..g.len() {
            assert!((0.3 * x[i] - 0.7 * lap[i] - f[i]).abs() < 1e-10);
        }
    }

    #[test]
    fn poincare_constant_approaches_bessel_value() {
        let target = 1.0 / (J01 * J01);
        let mut cs = vec![];
        for n in [8, 16, 32, 64] {
            let g = DiskGrid::new(n, 16).unwrap();
            cs.push(poincare_constant(&g).unwrap());
        }
        let d: Vec<f64> = cs.windows(2).map(|w| (w[1] - w[0]).abs()).collect();
        assert!(d[0] > d[1] && d[1] > d[2], "{cs:?}");
        assert!((cs[3] - target).abs() < 1e-3 * target, "{cs:?}");
    }

    #[test]
    fn poincare_inequality_holds_for_random_fields() {
        let g = DiskGrid::new(24, 16).unwrap();
        let c0 = poincare_constant(&g).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let f: Vec<f64> = (0..g.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let lhs = g.inner(&f, &f);
            assert!(lhs <= c0 * (1.0 + 1e-6) * g.dirichlet_energy(&f));
        }
    }

    #[test]
    fn interpolation_is_exact_on_nodes_and_linear_fields() {
        let g = DiskGrid::new(16, 16).unwrap();
        let f = g.sample(|x, y| 0.3 + x - 2.0 * y);
        for i in [0, 5, 100, g.len() - 1] {
            let (j, k) = g.ring_of(i);
            let v = g.interpolate(&f, g.radius(j), g.theta(k), 0.0);
            assert!((v - f[i]).abs() < 1e-12);
        }
    }
}
