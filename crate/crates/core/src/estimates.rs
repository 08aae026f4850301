//! Energy ledgers and the checks of the decay, gradient, interpolation and
//! stability bounds against discrete solutions.

use std::f64::consts::PI;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{HelixError, Result};
use crate::fields::random_dirichlet_field;
use crate::grid::{poincare_constant, DiskGrid};
use crate::helix::{vertical_derivative_vec, SliceField};
use crate::solver::{convective_term, Velocity};

/// One sampled row of a run. All norms are over the cylinder `B1 x [0, 2π)`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub t: f64,
    /// `‖u‖²`.
    pub energy: f64,
    /// `2ν ∫₀ᵗ ‖∇_h u‖²`.
    pub gh: f64,
    /// `∫₀ᵗ ‖∇u‖²`, with `∂3 u` from horizontal data.
    pub gfull: f64,
    /// `‖u‖²_{H¹}`.
    pub h1: f64,
    /// `ν ∫₀ᵗ (‖∇_h u‖² + ‖Δ_h u‖² + ‖∇_h ∂3 u‖²)`.
    pub gh_h1: f64,
    /// `‖div u‖` after the step.
    pub div_res: f64,
}

/// Per-step record, dense in time, used for weighted time integrals.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    /// Midpoint time of the step.
    pub t_mid: f64,
    pub dt: f64,
    /// `‖∇_h u^{n+1/2}‖²`.
    pub grad_h_mid: f64,
    /// `E_{n+1} - E_n + 2ν dt ‖∇_h u^{n+1/2}‖² - 2 dt ⟨f, u^{n+1/2}⟩`.
    pub defect: f64,
    pub iterations: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EnergyLedger {
    pub nu: f64,
    pub rows: Vec<LedgerRow>,
    pub steps: Vec<StepRecord>,
    /// Set when the run stopped early; the rows up to the failure are kept.
    pub failure: Option<String>,
}

impl EnergyLedger {
    pub fn new(nu: f64) -> Self {
        Self {
            nu,
            ..Self::default()
        }
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn initial_energy(&self) -> Option<f64> {
        self.rows.first().map(|r| r.energy)
    }

    pub fn last(&self) -> Option<&LedgerRow> {
        self.rows.last()
    }

    /// `Σ |ε_n|` over the accepted steps.
    pub fn total_defect(&self) -> f64 {
        self.steps.iter().map(|s| s.defect.abs()).sum()
    }

    /// Largest positive per-step defect, i.e. the worst energy gain.
    pub fn max_defect(&self) -> f64 {
        self.steps.iter().map(|s| s.defect).fold(0.0, f64::max)
    }
}

// -------------------------------------------------------------------
// norms and functionals

/// Height of the periodic cylinder.
pub const CYLINDER_HEIGHT: f64 = 2.0 * PI;

/// `(2/π)^{1/4}`, the constant of the helical Ladyzhenskaya inequality.
pub fn ladyzhenskaya_constant() -> f64 {
    (2.0 / PI).powf(0.25)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormKind {
    L2,
    L4,
    H1,
}

impl FromStr for NormKind {
    type Err = HelixError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "2" | "l2" => Ok(Self::L2),
            "4" | "l4" => Ok(Self::L4),
            "h1" => Ok(Self::H1),
            _ => Err(HelixError::UnsupportedNorm(s.to_string())),
        }
    }
}

/// Where a norm is taken: the unit disk or the cylinder `B1 x [0, 2π)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Domain {
    Disk,
    Cylinder,
}

impl Domain {
    /// Factor turning a disk integral into a cylinder integral.
    fn volume(self) -> f64 {
        match self {
            Domain::Disk => 1.0,
            Domain::Cylinder => CYLINDER_HEIGHT,
        }
    }
}

/// `L²` or `L⁴` norm of a field with any number of components, with
/// `|v|` the pointwise Euclidean length.
pub fn component_norm(
    grid: &DiskGrid,
    comps: &[&[f64]],
    kind: NormKind,
    domain: Domain,
) -> Result<f64> {
    for c in comps {
        if c.len() != grid.len() {
            return Err(HelixError::ShapeMismatch {
                expected: grid.len(),
                got: c.len(),
            });
        }
    }
    let sq: Vec<f64> = (0..grid.len())
        .map(|i| comps.iter().map(|c| c[i] * c[i]).sum())
        .collect();
    match kind {
        NormKind::L2 => Ok((domain.volume() * grid.integrate(&sq)).sqrt()),
        NormKind::L4 => {
            let q: Vec<f64> = sq.iter().map(|s| s * s).collect();
            Ok((domain.volume() * grid.integrate(&q)).powf(0.25))
        }
        NormKind::H1 => Err(HelixError::UnsupportedNorm("h1 of raw components".into())),
    }
}

/// Squared disk norms that make up `‖u‖²_{H¹}` of the helical extension.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SliceNorms {
    /// `‖w‖²`.
    pub l2_sq: f64,
    /// `‖∇_h w‖²` in the discrete Dirichlet form.
    pub grad_h_sq: f64,
    /// `‖∂3 u‖²` on the slice.
    pub d3_sq: f64,
}

impl SliceNorms {
    pub fn of(w: &SliceField) -> Self {
        let g = &*w.grid;
        let d3 = vertical_derivative_vec(w);
        Self {
            l2_sq: w.inner(w),
            grad_h_sq: w.u.iter().map(|c| g.dirichlet_energy(c)).sum(),
            d3_sq: d3.iter().map(|c| g.inner(c, c)).sum(),
        }
    }

    /// `‖∇u‖² = ‖∇_h u‖² + ‖∂3 u‖²`.
    pub fn grad_sq(&self) -> f64 {
        self.grad_h_sq + self.d3_sq
    }

    pub fn h1_sq(&self) -> f64 {
        self.l2_sq + self.grad_sq()
    }
}

/// Norm of the helical field `w`, on the disk or scaled to the cylinder.
pub fn norm(w: &SliceField, kind: NormKind, domain: Domain) -> Result<f64> {
    match kind {
        NormKind::H1 => Ok((domain.volume() * SliceNorms::of(w).h1_sq()).sqrt()),
        _ => {
            let comps: Vec<&[f64]> = w.u.iter().map(|c| c.as_slice()).collect();
            component_norm(&w.grid, &comps, kind, domain)
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LadyVariant {
    /// `‖u‖_{L⁴} / ((2/π)^{1/4} (‖u‖^{1/2} ‖∇_h u‖^{1/2} + ‖u‖))`.
    Interior,
    /// `‖u‖_{L⁴} / (‖u‖^{1/2} ‖∇_h u‖^{1/2})`, for no-slip data.
    Dirichlet,
}

/// Ladyzhenskaya ratio with cylinder norms. Invariant under `w -> αw`.
pub fn ladyzhenskaya_ratio(w: &SliceField, variant: LadyVariant) -> Result<f64> {
    let n = SliceNorms::of(w);
    if n.l2_sq == 0.0 {
        return Err(HelixError::ZeroField);
    }
    let l4 = norm(w, NormKind::L4, Domain::Cylinder)?;
    let l2 = (CYLINDER_HEIGHT * n.l2_sq).sqrt();
    let gh = (CYLINDER_HEIGHT * n.grad_h_sq).sqrt();
    let interp = (l2 * gh).sqrt();
    match variant {
        LadyVariant::Interior => Ok(l4 / (ladyzhenskaya_constant() * (interp + l2))),
        LadyVariant::Dirichlet if interp > 0.0 => Ok(l4 / interp),
        LadyVariant::Dirichlet => Err(HelixError::ZeroField),
    }
}

fn check_same_grid(a: &SliceField, b: &SliceField) -> Result<()> {
    if a.same_grid(b) {
        Ok(())
    } else {
        Err(HelixError::GridMismatch(format!(
            "{}x{} vs {}x{}",
            a.grid.nr(),
            a.grid.ntheta(),
            b.grid.nr(),
            b.grid.ntheta()
        )))
    }
}

fn cyl_inner(g: &DiskGrid, a: &Velocity, b: &Velocity) -> f64 {
    CYLINDER_HEIGHT * (0..3).map(|c| g.inner(&a[c], &b[c])).sum::<f64>()
}

/// Discrete `b(u, v, w) = Σ ∫ u_i ∂_i v_j w_j` over the cylinder, in the
/// skew-symmetric form used by the time stepper. For helically
/// divergence-free no-slip `u` it is a consistent approximation of the
/// advective form; [`trilinear_b_advective`] measures the difference.
pub fn trilinear_b(u: &SliceField, v: &SliceField, w: &SliceField) -> Result<f64> {
    check_same_grid(u, v)?;
    check_same_grid(u, w)?;
    let g = &*u.grid;
    Ok(cyl_inner(g, &convective_term(g, &u.u, &v.u), &w.u))
}

/// `b(u, v, w)` with `∂1, ∂2` from the polar chain rule and `∂3` replaced by
/// the helical vertical derivative, without skew-symmetrisation.
pub fn trilinear_b_advective(u: &SliceField, v: &SliceField, w: &SliceField) -> Result<f64> {
    check_same_grid(u, v)?;
    check_same_grid(u, w)?;
    let g = &*u.grid;
    let [d1, d2] = [0, 1].map(|a| {
        let mut out = [vec![0.0; g.len()], vec![0.0; g.len()], vec![0.0; g.len()]];
        for c in 0..3 {
            out[c] = g.grad_h(&v.u[c])[a].clone();
        }
        out
    });
    let d3 = vertical_derivative_vec(v);
    let adv: Velocity = std::array::from_fn(|c| {
        (0..g.len())
            .map(|i| u.u[0][i] * d1[c][i] + u.u[1][i] * d2[c][i] + u.u[2][i] * d3[c][i])
            .collect()
    });
    Ok(cyl_inner(g, &adv, &w.u))
}

/// Ratio `‖∇u‖ / ‖u‖_{H¹(D)}` with `∇u` including the helical `∂3 u`.
/// `domain` selects where the numerator is taken; the denominator is
/// always the cylinder norm.
pub fn gradient_equivalence(w: &SliceField, domain: Domain) -> Result<f64> {
    let n = SliceNorms::of(w);
    if n.l2_sq == 0.0 {
        return Err(HelixError::ZeroField);
    }
    Ok((domain.volume() * n.grad_sq()).sqrt() / (CYLINDER_HEIGHT * n.h1_sq()).sqrt())
}

/// Measured constants used by every bound check.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Constants {
    /// Discrete Poincaré constant `1/λ1`.
    pub c0: f64,
    /// Gradient-equivalence constant with the disk numerator, the form the
    /// stability argument uses slice by slice.
    pub c_star: f64,
    /// The same sweep with the cylinder numerator.
    pub c_star_cylinder: f64,
    /// Largest interior Ladyzhenskaya ratio of the sweep.
    pub lady_c: f64,
    /// Largest Dirichlet-variant ratio, an estimate of the generic constant.
    pub lady_dirichlet: f64,
    pub samples: usize,
}

/// Sweeps `samples` random no-slip slices, seeded `seed, seed + 1, ...`.
pub fn measure_constants(grid: Arc<DiskGrid>, seed: u64, samples: usize) -> Result<Constants> {
    let c0 = poincare_constant(&grid)?;
    let mut k = Constants {
        c0,
        c_star: 0.0,
        c_star_cylinder: 0.0,
        lady_c: 0.0,
        lady_dirichlet: 0.0,
        samples,
    };
    for s in 0..samples as u64 {
        let w = random_dirichlet_field(grid.clone(), seed.wrapping_add(s));
        k.c_star = k.c_star.max(gradient_equivalence(&w, Domain::Disk)?);
        k.c_star_cylinder = k
            .c_star_cylinder
            .max(gradient_equivalence(&w, Domain::Cylinder)?);
        k.lady_c = k
            .lady_c
            .max(ladyzhenskaya_ratio(&w, LadyVariant::Interior)?);
        k.lady_dirichlet = k
            .lady_dirichlet
            .max(ladyzhenskaya_ratio(&w, LadyVariant::Dirichlet)?);
    }
    Ok(k)
}

// -------------------------------------------------------------------
// bound reports

/// One comparison `lhs <= rhs (1 + tolerance)` at time `t`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundCheck {
    pub t: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub margin: f64,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundReport {
    pub bound_name: String,
    pub tolerance: f64,
    pub checks: Vec<BoundCheck>,
    pub passed: bool,
    /// Free-form remark, e.g. a fitted constant.
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note: Option<String>,
}

impl BoundReport {
    pub fn new(name: &str, tolerance: f64) -> Self {
        Self {
            bound_name: name.to_string(),
            tolerance,
            checks: Vec::new(),
            passed: true,
            note: None,
        }
    }

    pub fn push(&mut self, t: f64, lhs: f64, rhs: f64) {
        let passed = lhs <= rhs * (1.0 + self.tolerance) && lhs.is_finite();
        self.passed &= passed;
        self.checks.push(BoundCheck {
            t,
            lhs,
            rhs,
            margin: rhs - lhs,
            passed,
        });
    }

    pub fn with_note(mut self, note: impl Into<String>) -> Self {
        self.note = Some(note.into());
        self
    }

    /// Largest `lhs / rhs`, or 0 when every side is zero.
    pub fn worst_ratio(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| {
                if c.rhs > 0.0 {
                    c.lhs / c.rhs
                } else if c.lhs > 0.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            })
            .fold(0.0, f64::max)
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("bound reports serialise")
    }
}

/// Tolerance for time-integrated bounds.
pub const TIME_TOLERANCE: f64 = 0.02;

fn nonempty(ledger: &EnergyLedger) -> Result<&LedgerRow> {
    ledger.rows.first().ok_or(HelixError::EmptyLedger)
}

/// `ν ∫₀ᵗ e^{(ν/c0)τ} ‖∇_h u‖² dτ` at each row time, by the midpoint rule
/// over the per-step records.
pub fn weighted_dissipation(ledger: &EnergyLedger, c0: f64) -> Vec<f64> {
    let nu = ledger.nu;
    let mut out = Vec::with_capacity(ledger.rows.len());
    let mut acc = 0.0;
    let mut steps = ledger.steps.iter().peekable();
    for row in &ledger.rows {
        while let Some(s) = steps.next_if(|s| s.t_mid < row.t) {
            acc += nu * s.dt * (nu / c0 * s.t_mid).exp() * s.grad_h_mid;
        }
        out.push(acc);
    }
    out
}

/// Exponential decay (a), the weak energy inequality (b) and the weighted
/// dissipation bound (c).
pub fn verify_decay(ledger: &EnergyLedger, nu: f64, c0: f64) -> Result<[BoundReport; 3]> {
    let e0 = nonempty(ledger)?.energy;
    let mut a = BoundReport::new("exponential-decay", TIME_TOLERANCE);
    let mut b = BoundReport::new("energy-inequality", TIME_TOLERANCE);
    let mut c = BoundReport::new("weighted-dissipation", TIME_TOLERANCE);
    let weighted = weighted_dissipation(ledger, c0);
    for (row, wd) in ledger.rows.iter().zip(weighted) {
        a.push(row.t, row.energy, decay_rhs(e0, nu, c0, row.t));
        b.push(row.t, row.energy + row.gh, e0);
        c.push(row.t, wd, e0);
    }
    Ok([a, b, c])
}

/// `e^{-(2ν/c0) t} E(0)`.
pub fn decay_rhs(e0: f64, nu: f64, c0: f64, t: f64) -> f64 {
    (-2.0 * nu / c0 * t).exp() * e0
}

/// `∫₀ᵗ ‖∇u‖² <= (4 + c0)/(2ν) E(0)`.
pub fn verify_uniform_gradient(ledger: &EnergyLedger, nu: f64, c0: f64) -> Result<BoundReport> {
    let e0 = nonempty(ledger)?.energy;
    let rhs = (4.0 + c0) / (2.0 * nu) * e0;
    let mut r = BoundReport::new("uniform-gradient", TIME_TOLERANCE);
    for row in &ledger.rows {
        r.push(row.t, row.gfull, rhs);
    }
    Ok(r)
}

/// Gronwall constant of the H¹ bound, fitted on a calibration run with
/// [`fit_h1_constant`] and frozen here.
pub const H1_GRONWALL_C: f64 = 0.0;

/// Smallest `C >= 0` with `H1(t) <= H1(0) exp(C (t + Gfull(t)))` on every row.
pub fn fit_h1_constant(ledger: &EnergyLedger) -> Result<f64> {
    let h0 = nonempty(ledger)?.h1;
    Ok(ledger
        .rows
        .iter()
        .filter(|r| r.t > 0.0 && h0 > 0.0)
        .map(|r| (r.h1 / h0).ln() / (r.t + r.gfull))
        .fold(0.0, f64::max))
}

/// Gronwall-form H¹ bound with the frozen constant `c`, plus the
/// requirement `sup H1 <= 10 H1(0)`.
pub fn verify_h1(ledger: &EnergyLedger, c: f64) -> Result<[BoundReport; 2]> {
    let h0 = nonempty(ledger)?.h1;
    let mut gronwall = BoundReport::new("h1-gronwall", 1e-9).with_note(format!(
        "C = {c} frozen from a calibration run, not a constant of the analysis"
    ));
    let mut tenfold = BoundReport::new("h1-tenfold", 0.0);
    for row in &ledger.rows {
        gronwall.push(row.t, row.h1, h0 * (c * (row.t + row.gfull)).exp());
        tenfold.push(row.t, row.h1, 10.0 * h0);
    }
    Ok([gronwall, tenfold])
}

/// `‖u - v‖²(t)` sampled on the common ledger times of a run pair.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DifferenceLedger {
    pub t: Vec<f64>,
    pub diff_sq: Vec<f64>,
}

/// `exp[(4c*² + 2c*² c0)/ν² ‖u0‖²]`.
pub fn stability_factor(k: &Constants, nu: f64, e0: f64) -> f64 {
    let cs2 = k.c_star * k.c_star;
    ((4.0 * cs2 + 2.0 * cs2 * k.c0) / (nu * nu) * e0).exp()
}

/// `‖u - v‖²(t) <= ‖u0 - v0‖² exp[(4c*² + 2c*² c0)/ν² ‖u0‖²]`.
pub fn verify_stability(
    ledger_u: &EnergyLedger,
    ledger_v: &EnergyLedger,
    diff: &DifferenceLedger,
    constants: &Constants,
) -> Result<BoundReport> {
    let e0 = nonempty(ledger_u)?.energy;
    nonempty(ledger_v)?;
    if ledger_u.nu != ledger_v.nu {
        return Err(HelixError::Config(format!(
            "viscosities differ: {} vs {}",
            ledger_u.nu, ledger_v.nu
        )));
    }
    let same = |a: &[f64], b: &[f64]| {
        a.len() == b.len() && a.iter().zip(b).all(|(x, y)| (x - y).abs() < 1e-12)
    };
    let tu: Vec<f64> = ledger_u.rows.iter().map(|r| r.t).collect();
    let tv: Vec<f64> = ledger_v.rows.iter().map(|r| r.t).collect();
    if !same(&tu, &tv) || !same(&tu, &diff.t) {
        return Err(HelixError::TimeAxisMismatch(format!(
            "{} / {} / {} samples",
            tu.len(),
            tv.len(),
            diff.t.len()
        )));
    }
    let d0 = *diff.diff_sq.first().ok_or(HelixError::EmptyLedger)?;
    let rhs = d0 * stability_factor(constants, ledger_u.nu, e0);
    let mut r = BoundReport::new("stability", 1e-9);
    for (t, d) in diff.t.iter().zip(&diff.diff_sq) {
        r.push(*t, *d, rhs);
    }
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::{random_helical_field, random_helical_poly, stokes_eigenfield};
    use crate::helix::Vec3;
    use crate::solver::{project, Solver, SolverConfig};
    use proptest::prelude::*;

    fn grid(n: usize) -> Arc<DiskGrid> {
        Arc::new(DiskGrid::new(n, n).unwrap())
    }

    fn bowl(g: Arc<DiskGrid>) -> SliceField {
        SliceField::from_fn(g, |x, y| Vec3::new(0.0, 0.0, 1.0 - x * x - y * y))
    }

    #[test]
    fn norms_of_constant_field() {
        let g = grid(32);
        let w = SliceField::from_fn(g, |_, _| Vec3::new(0.0, 0.0, 1.0));
        let disk = norm(&w, NormKind::L2, Domain::Disk).unwrap();
        let cyl = norm(&w, NormKind::L2, Domain::Cylinder).unwrap();
        assert!((disk - PI.sqrt()).abs() < 1e-10);
        assert!((cyl - (2.0 * PI * PI).sqrt()).abs() < 1e-10);
        assert!((cyl / disk - (2.0 * PI).sqrt()).abs() < 1e-12);
        assert_eq!(
            norm(&SliceField::zeros(grid(8)), NormKind::H1, Domain::Disk).unwrap(),
            0.0
        );
    }

    #[test]
    fn bowl_norms_match_closed_forms() {
        // ∫(1-r²)² = π/3, ∫(1-r²)⁴ = π/5, ∫|∇(1-r²)|² = ∫4r² = 2π over B1
        let w = bowl(grid(64));
        let n = SliceNorms::of(&w);
        let l4 = norm(&w, NormKind::L4, Domain::Disk).unwrap().powi(4);
        assert!((n.l2_sq / (PI / 3.0) - 1.0).abs() < 5e-3);
        assert!((l4 / (PI / 5.0) - 1.0).abs() < 5e-3);
        assert!((n.grad_h_sq / (2.0 * PI) - 1.0).abs() < 5e-3);
        assert!(n.d3_sq < 1e-20);
    }

    #[test]
    fn bowl_ladyzhenskaya_ratio_matches_symbolic_value() {
        let h = 2.0 * PI;
        let (l2, l4, gh) = (
            (h * PI / 3.0).sqrt(),
            (h * PI / 5.0).powf(0.25),
            (h * 2.0 * PI).sqrt(),
        );
        let exact = l4 / ((2.0 / PI).powf(0.25) * ((l2 * gh).sqrt() + l2));
        let r = ladyzhenskaya_ratio(&bowl(grid(64)), LadyVariant::Interior).unwrap();
        assert!(exact < 1.0);
        assert!((r / exact - 1.0).abs() < 5e-3, "{r} vs {exact}");
    }

    #[test]
    fn unsupported_norm_and_zero_field() {
        assert!(matches!(
            "3".parse::<NormKind>(),
            Err(HelixError::UnsupportedNorm(_))
        ));
        assert_eq!("h1".parse::<NormKind>().unwrap(), NormKind::H1);
        let z = SliceField::zeros(grid(8));
        assert_eq!(
            ladyzhenskaya_ratio(&z, LadyVariant::Interior),
            Err(HelixError::ZeroField)
        );
        assert_eq!(
            gradient_equivalence(&z, Domain::Disk),
            Err(HelixError::ZeroField)
        );
    }

    #[test]
    fn trilinear_identities_on_projected_fields() {
        let g = grid(32);
        let f = |s| project(&random_dirichlet_field(g.clone(), s), 1e-10).unwrap();
        let (u, v, w) = (f(1), f(2), f(3));
        let nrm = |a: &SliceField| norm(a, NormKind::L2, Domain::Cylinder).unwrap();
        let grad = |a: &SliceField| (CYLINDER_HEIGHT * SliceNorms::of(a).grad_sq()).sqrt();
        let bvv = trilinear_b(&u, &v, &v).unwrap();
        assert!(bvv.abs() <= 1e-6 * nrm(&u) * grad(&v) * nrm(&v));
        let skew = trilinear_b(&u, &v, &w).unwrap() + trilinear_b(&u, &w, &v).unwrap();
        assert!(skew.abs() <= 1e-6 * nrm(&u) * grad(&v) * nrm(&w));
        assert_eq!(
            trilinear_b(&SliceField::zeros(g.clone()), &v, &w).unwrap(),
            0.0
        );
    }

    #[test]
    fn skew_and_advective_forms_agree_under_refinement() {
        let (pu, pv, pw) = (
            random_helical_poly(1),
            random_helical_poly(2),
            random_helical_poly(3),
        );
        let gaps: Vec<f64> = [16, 32, 64]
            .iter()
            .map(|&n| {
                let g = grid(n);
                let (u, v, w) = (pu.sample(g.clone()), pv.sample(g.clone()), pw.sample(g));
                (trilinear_b(&u, &v, &w).unwrap() - trilinear_b_advective(&u, &v, &w).unwrap())
                    .abs()
            })
            .collect();
        assert!(gaps[1] < gaps[0] && gaps[2] < gaps[1], "{gaps:?}");
        assert!(gaps[2] < 1e-2, "{gaps:?}");
    }

    #[test]
    fn trilinear_rejects_mixed_grids() {
        let a = SliceField::zeros(grid(8));
        let b = SliceField::zeros(grid(16));
        assert!(matches!(
            trilinear_b(&a, &b, &b),
            Err(HelixError::GridMismatch(_))
        ));
    }

    #[test]
    fn vertical_constant_has_no_vertical_gradient() {
        // the constant is not no-slip, so the discrete Dirichlet form only
        // sees the jump to the wall; ∂3 u vanishes identically
        let w = SliceField::from_fn(grid(16), |_, _| Vec3::new(0.0, 0.0, 0.4));
        let n = SliceNorms::of(&w);
        assert!(n.d3_sq < 1e-24);
        let r = gradient_equivalence(&w, Domain::Cylinder).unwrap();
        let expected = (n.grad_h_sq / n.h1_sq()).sqrt();
        assert!((r - expected).abs() < 1e-12 && r < 1.0);
    }

    #[test]
    fn vertical_derivative_obeys_the_triangle_bound() {
        let g = grid(24);
        for s in 0..100 {
            let w = random_dirichlet_field(g.clone(), s);
            let n = SliceNorms::of(&w);
            assert!(n.d3_sq.sqrt() <= n.grad_h_sq.sqrt() + n.l2_sq.sqrt());
        }
    }

    #[test]
    fn constants_sweep() {
        let k = measure_constants(grid(24), 100, 40).unwrap();
        assert!((k.c0 - 0.1729).abs() < 5e-3);
        assert!(k.c_star > 0.0 && k.c_star <= 1.0);
        assert!(k.c_star_cylinder <= 2f64.sqrt() * (1.0 + 1e-6));
        assert!(k.lady_c <= 1.0);
        assert_eq!(k.samples, 40);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn ratios_are_scale_invariant(seed in 0u64..1000, a in 1e-3f64..1e3) {
            let g = grid(12);
            let w = random_dirichlet_field(g, seed);
            let v = w.scaled(a);
            for variant in [LadyVariant::Interior, LadyVariant::Dirichlet] {
                let (r0, r1) = (ladyzhenskaya_ratio(&w, variant).unwrap(), ladyzhenskaya_ratio(&v, variant).unwrap());
                prop_assert!((r0 - r1).abs() <= 1e-12 * r0);
            }
            for d in [Domain::Disk, Domain::Cylinder] {
                let (r0, r1) = (gradient_equivalence(&w, d).unwrap(), gradient_equivalence(&v, d).unwrap());
                prop_assert!((r0 - r1).abs() <= 1e-12 * r0);
            }
        }

        #[test]
        fn interior_ladyzhenskaya_holds(seed in 0u64..10_000) {
            let w = random_dirichlet_field(grid(16), seed);
            prop_assert!(ladyzhenskaya_ratio(&w, LadyVariant::Interior).unwrap() <= 1.0);
        }
    }

    #[test]
    fn report_logic() {
        let mut r = BoundReport::new("x", 0.02);
        r.push(0.0, 0.0, 0.0);
        r.push(1.0, 1.01, 1.0);
        assert!(r.passed);
        r.push(2.0, 1.03, 1.0);
        assert!(!r.passed);
        assert!((r.worst_ratio() - 1.03).abs() < 1e-12);
        let back: BoundReport = serde_json::from_str(&r.to_json_line()).unwrap();
        assert_eq!(back, r);
    }

    fn synthetic(nu: f64, grads: &[f64], dt: f64) -> EnergyLedger {
        let mut l = EnergyLedger::new(nu);
        l.rows.push(LedgerRow::default());
        for (k, g) in grads.iter().enumerate() {
            l.steps.push(StepRecord {
                t_mid: (k as f64 + 0.5) * dt,
                dt,
                grad_h_mid: *g,
                ..StepRecord::default()
            });
            l.rows.push(LedgerRow {
                t: (k + 1) as f64 * dt,
                ..LedgerRow::default()
            });
        }
        l
    }

    #[test]
    fn weighted_dissipation_is_a_midpoint_sum() {
        let (nu, c0, dt) = (0.5, 0.2, 0.1);
        let l = synthetic(nu, &[1.0, 2.0], dt);
        let w = weighted_dissipation(&l, c0);
        let e = |t: f64| (nu / c0 * t).exp();
        assert_eq!(w[0], 0.0);
        assert!((w[1] - nu * dt * e(0.05)).abs() < 1e-14);
        assert!((w[2] - nu * dt * (e(0.05) + 2.0 * e(0.15))).abs() < 1e-14);
    }

    #[test]
    fn empty_ledgers_are_errors() {
        let l = EnergyLedger::new(0.5);
        assert!(matches!(
            verify_decay(&l, 0.5, 0.17),
            Err(HelixError::EmptyLedger)
        ));
        assert!(matches!(
            verify_uniform_gradient(&l, 0.5, 0.17),
            Err(HelixError::EmptyLedger)
        ));
        assert!(matches!(verify_h1(&l, 0.0), Err(HelixError::EmptyLedger)));
    }

    fn quick_cfg(t_end: f64, advection_on: bool) -> SolverConfig {
        SolverConfig {
            t_end,
            dt: 1e-3,
            advection_on,
            ..SolverConfig::default()
        }
    }

    #[test]
    fn zero_data_satisfies_every_bound_with_equality() {
        let g = grid(12);
        let s = Solver::new(quick_cfg(0.01, true), g.clone()).unwrap();
        let (_, l) = s.run(&SliceField::zeros(g.clone())).unwrap();
        let c0 = poincare_constant(&g).unwrap();
        for r in verify_decay(&l, 0.5, c0).unwrap() {
            assert!(r.passed && r.checks.iter().all(|c| c.lhs == 0.0 && c.rhs == 0.0));
        }
        assert!(verify_uniform_gradient(&l, 0.5, c0).unwrap().passed);
        assert!(verify_h1(&l, 0.0).unwrap().iter().all(|r| r.passed));
    }

    #[test]
    fn eigenfield_saturates_the_decay_bound() {
        let g = grid(32);
        let (lambda, w) = stokes_eigenfield(g.clone()).unwrap();
        let s = Solver::new(quick_cfg(0.5, false), g.clone()).unwrap();
        let (_, l) = s.run(&w).unwrap();
        let c0 = 1.0 / lambda;
        let [a, b, c] = verify_decay(&l, 0.5, c0).unwrap();
        let last = a.checks.last().unwrap();
        assert!((last.lhs / last.rhs - 1.0).abs() < 0.01);
        assert!(a.passed && b.passed && c.passed);
    }

    #[test]
    fn uniform_gradient_margin_is_nonincreasing() {
        let g = grid(16);
        let s = Solver::new(quick_cfg(0.05, true), g.clone()).unwrap();
        let (_, l) = s.run(&random_helical_field(g.clone(), 5, 1.0)).unwrap();
        let r = verify_uniform_gradient(&l, 0.5, poincare_constant(&g).unwrap()).unwrap();
        assert!(r.passed);
        assert!(r.checks.windows(2).all(|w| w[1].margin <= w[0].margin));
        assert!(r.checks.iter().all(|c| c.rhs == r.checks[0].rhs));
    }

    #[test]
    fn stability_checks_time_axes() {
        let g = grid(12);
        let s = Solver::new(quick_cfg(0.01, true), g.clone()).unwrap();
        let u0 = random_helical_field(g.clone(), 1, 1.0);
        let pair = s.run_pair(&u0, &u0).unwrap();
        let k = measure_constants(g, 0, 5).unwrap();
        let r = verify_stability(&pair.ledger_u, &pair.ledger_v, &pair.diff, &k).unwrap();
        assert!(r.passed);
        assert!(pair.diff.diff_sq.iter().all(|d| *d == 0.0));
        let mut short = pair.diff.clone();
        short.t.pop();
        assert!(matches!(
            verify_stability(&pair.ledger_u, &pair.ledger_v, &short, &k),
            Err(HelixError::TimeAxisMismatch(_))
        ));
    }
}
