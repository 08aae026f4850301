//! Generators for initial data and test slices.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::grid::{dirichlet_ground_state, DiskGrid};
use crate::helix::{SliceField, Vec3};
use crate::poly::Poly2;

/// A helical slice velocity with polynomial components.
#[derive(Clone, Debug)]
pub struct PolyVelocity {
    pub u: [Poly2; 3],
}

impl PolyVelocity {
    /// Builds a no-slip field that is divergence-free in the helical sense
    /// (`∂1 u1 + ∂2 u2 + ∂θ u3 = 0`) from a stream function `psi`, a vector
    /// potential `(v1, v2)` and a radial axial profile `axial`. `psi` and `v`
    /// must vanish to second order on the wall.
    ///
    /// The horizontal part is `∇^⊥ψ + ∂θ v + v^⊥` and the axial part is
    /// `axial - div v`; the `v` terms are the horizontal and vertical parts of
    /// the helical `∂3` applied to `(v1, v2, 0)`, whose helical divergence
    /// cancels identically.
    pub fn divergence_free(psi: &Poly2, v1: &Poly2, v2: &Poly2, axial: &Poly2) -> Self {
        let u1 = psi.dy() + v1.dtheta() + v2.clone();
        let u2 = -psi.dx() + v2.dtheta() - v1.clone();
        let u3 = axial.clone() - v1.dx() - v2.dy();
        Self { u: [u1, u2, u3] }
    }

    pub fn eval(&self, x: f64, y: f64) -> Vec3 {
        Vec3([
            self.u[0].eval(x, y),
            self.u[1].eval(x, y),
            self.u[2].eval(x, y),
        ])
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            u: [self.u[0].scale(a), self.u[1].scale(a), self.u[2].scale(a)],
        }
    }

    pub fn sample(&self, grid: Arc<DiskGrid>) -> SliceField {
        SliceField::from_fn(grid, |x, y| self.eval(x, y))
    }

    /// Helical divergence of the analytic field, evaluated at a point.
    pub fn divergence(&self, x: f64, y: f64) -> f64 {
        self.u[0].dx().eval(x, y) + self.u[1].dy().eval(x, y) + self.u[2].dtheta().eval(x, y)
    }
}

fn random_poly(rng: &mut ChaCha8Rng, degree: usize) -> Poly2 {
    let mut p = Poly2::zero();
    for d in 0..=degree {
        for i in 0..=d {
            let c: f64 = rng.gen_range(-1.0..1.0) / (1.0 + d as f64);
            p = p + Poly2::monomial(c, i, d - i);
        }
    }
    p
}

/// A smooth random helical no-slip velocity with zero helical divergence.
pub fn random_helical_poly(seed: u64) -> PolyVelocity {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w2 = Poly2::wall() * Poly2::wall();
    let psi = w2.clone() * random_poly(&mut rng, 2);
    let v1 = w2.clone() * random_poly(&mut rng, 2);
    let v2 = w2 * random_poly(&mut rng, 2);
    let r2 = Poly2::monomial(1.0, 2, 0) + Poly2::monomial(1.0, 0, 2);
    let axial = Poly2::wall()
        * (Poly2::constant(rng.gen_range(-1.0..1.0)) + r2.scale(rng.gen_range(-1.0..1.0)));
    PolyVelocity::divergence_free(&psi, &v1, &v2, &axial)
}

/// Samples [`random_helical_poly`] and rescales it to the given peak speed.
pub fn random_helical_field(grid: Arc<DiskGrid>, seed: u64, peak_speed: f64) -> SliceField {
    let mut w = random_helical_poly(seed).sample(grid);
    let m = w.max_speed();
    if m > 0.0 {
        w.scale(peak_speed / m);
    }
    w
}

/// A smooth random no-slip slice without any divergence constraint.
pub fn random_dirichlet_field(grid: Arc<DiskGrid>, seed: u64) -> SliceField {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let comps: Vec<Poly2> = (0..3)
        .map(|_| Poly2::wall() * random_poly(&mut rng, 4))
        .collect();
    SliceField::from_fn(grid, |x, y| {
        Vec3([
            comps[0].eval(x, y),
            comps[1].eval(x, y),
            comps[2].eval(x, y),
        ])
    })
}

/// `(0, 0, φ1)` with `φ1` the discrete ground state of `-Δ_h`, normalised
/// to unit peak. It is divergence-free and an exact nonlinear steady
/// profile up to viscous decay.
pub fn stokes_eigenfield(grid: Arc<DiskGrid>) -> Result<(f64, SliceField)> {
    let (lambda, mut phi) = dirichlet_ground_state(&grid, 1e-14, 400)?;
    // the ground state is radial; drop the angular residue of the iteration
    for ring in phi.chunks_mut(grid.ntheta()) {
        let avg = ring.iter().sum::<f64>() / ring.len() as f64;
        ring.fill(avg);
    }
    let peak = phi.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let sign = if phi[0] < 0.0 { -1.0 } else { 1.0 };
    phi.iter_mut().for_each(|v| *v *= sign / peak);
    let mut w = SliceField::zeros(grid);
    w.u[2] = phi;
    Ok((lambda, w))
}

/// A forced exact solution `w(x, t) = e^{-t} P(x)` with `P` from
/// [`random_helical_poly`] and zero pressure. The forcing balances the time
/// derivative, the helical advection and the horizontal viscous term exactly.
#[derive(Clone, Debug)]
pub struct Manufactured {
    pub shape: PolyVelocity,
    pub nu: f64,
    laplacian: [Poly2; 3],
    advection: [Poly2; 3],
}

impl Manufactured {
    pub fn new(seed: u64, nu: f64) -> Self {
        let shape = random_helical_poly(seed);
        let p = &shape.u;
        let laplacian = std::array::from_fn(|c| p[c].laplacian());
        // (P1 ∂1 + P2 ∂2 + P3 D3) P with D3 P = ∂θ P + P^⊥
        let perp = [p[1].clone(), -p[0].clone(), Poly2::zero()];
        let advection = std::array::from_fn(|c| {
            p[0].clone() * p[c].dx()
                + p[1].clone() * p[c].dy()
                + p[2].clone() * (p[c].dtheta() + perp[c].clone())
        });
        Self {
            shape,
            nu,
            laplacian,
            advection,
        }
    }

    pub fn exact(&self, grid: Arc<DiskGrid>, t: f64) -> SliceField {
        self.shape.scale((-t).exp()).sample(grid)
    }

    /// Body force at time `t`, sampled at the grid nodes.
    pub fn forcing_at(&self, grid: &DiskGrid, t: f64) -> [Vec<f64>; 3] {
        let a = (-t).exp();
        std::array::from_fn(|c| {
            let (p, lap, adv) = (&self.shape.u[c], &self.laplacian[c], &self.advection[c]);
            grid.sample(|x, y| {
                -a * p.eval(x, y) - self.nu * a * lap.eval(x, y) + a * a * adv.eval(x, y)
            })
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_poly_field_is_divergence_free_and_no_slip() {
        for seed in 0..5 {
            let f = random_helical_poly(seed);
            for &(x, y) in &[(0.1, 0.2), (-0.5, 0.3), (0.0, -0.9)] {
                assert!(f.divergence(x, y).abs() < 1e-12);
            }
            for a in 0..12 {
                let t = a as f64 * 0.5;
                assert!(f.eval(t.cos(), t.sin()).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn manufactured_forcing_matches_finite_differences() {
        // f = -aP - νaΔP + a²(P·∇)P with a = e^{-t}, by central differences
        let m = Manufactured::new(4, 0.3);
        let g = DiskGrid::new(8, 8).unwrap();
        let f = m.forcing_at(&g, 0.2);
        let (x, y) = g.cartesian(5);
        let a = (-0.2_f64).exp();
        let h = 1e-5;
        let p = |x: f64, y: f64| m.shape.eval(x, y);
        let u = p(x, y);
        let d1 = (p(x + h, y) - p(x - h, y)) * (0.5 / h);
        let d2 = (p(x, y + h) - p(x, y - h)) * (0.5 / h);
        let dth = d2 * x - d1 * y;
        let lap =
            (p(x + h, y) + p(x - h, y) + p(x, y + h) + p(x, y - h) - u * 4.0) * (1.0 / (h * h));
        let adv = d1 * u.0[0] + d2 * u.0[1] + (dth + u.perp()) * u.0[2];
        let want = u * (-a) - lap * (0.3 * a) + adv * (a * a);
        for c in 0..3 {
            assert!(
                (f[c][5] - want.0[c]).abs() < 1e-4,
                "{c}: {} vs {}",
                f[c][5],
                want.0[c]
            );
        }
    }

    #[test]
    fn eigenfield_decays_like_its_eigenvalue() {
        let g = Arc::new(DiskGrid::new(16, 16).unwrap());
        let (lambda, w) = stokes_eigenfield(g.clone()).unwrap();
        let lap = g.laplacian_h(&w.u[2]);
        for i in 0..g.len() {
            assert!((lap[i] + lambda * w.u[2][i]).abs() < 1e-5 * lambda);
        }
    }
}
