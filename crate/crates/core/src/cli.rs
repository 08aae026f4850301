//! Experiment runner behind the `helixlab` binary.
//!
//! An experiment is described by flat `key=value` text (one pair per line,
//! `#` starts a comment) plus command-line overrides, which win. Unknown keys
//! are errors. Every run writes into its output directory:
//!
//! * `summary.json`, one line with the verdict of every bound, the measured
//!   constants, the wall-clock time and, on failure, the stage that failed;
//! * with `format=csv|both`, header-bearing tables (`ledger.csv` and the
//!   experiment's own tables);
//! * with `format=json|both`, `reports.jsonl`, one bound report per line.
//!
//! The process exit status is 0 exactly when every bound passed.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::Arc;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use log::info;
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::error::{HelixError, Result};
use crate::estimates::{
    decay_rhs, fit_h1_constant, ladyzhenskaya_ratio, measure_constants, norm, stability_factor,
    verify_decay, verify_h1, verify_stability, verify_uniform_gradient, BoundReport, Constants,
    Domain, EnergyLedger, LadyVariant, NormKind, SliceNorms, H1_GRONWALL_C,
};
use crate::fields::{random_dirichlet_field, random_helical_field, Manufactured};
use crate::grid::{poincare_constant, DiskGrid};
use crate::helix::{SliceField, Vec3, VerticalSign};
use crate::oracle3d::{compare_slice_vs_3d, sign_arbitration, CompareConfig};
use crate::solver::{
    eigen_step_factor, spatial_order, temporal_order, Solver, SolverConfig, TimeScheme,
};

/// Environment variable naming the base output directory.
pub const OUTPUT_ENV: &str = "HELIX_OUTPUT_DIR";
pub const MAX_DISK_EXTENT: usize = 256;
pub const MAX_VERTICAL_EXTENT: usize = 64;

/// First zero of `J0`.
const J01: f64 = 2.404_825_557_695_773;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentName {
    Decay,
    EnergyIneq,
    LadyzhenskayaSweep,
    Constants,
    Stability,
    Convergence,
    OracleCompare,
    SignArbitration,
}

impl ExperimentName {
    pub const ALL: [ExperimentName; 8] = [
        Self::Decay,
        Self::EnergyIneq,
        Self::LadyzhenskayaSweep,
        Self::Constants,
        Self::Stability,
        Self::Convergence,
        Self::OracleCompare,
        Self::SignArbitration,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Decay => "decay",
            Self::EnergyIneq => "energy-ineq",
            Self::LadyzhenskayaSweep => "ladyzhenskaya-sweep",
            Self::Constants => "constants",
            Self::Stability => "stability",
            Self::Convergence => "convergence",
            Self::OracleCompare => "oracle-compare",
            Self::SignArbitration => "sign-arbitration",
        }
    }
}

impl fmt::Display for ExperimentName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ExperimentName {
    type Err = HelixError;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| malformed("name", s, "an experiment name"))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OutputFormat {
    Csv,
    Json,
    Both,
}

impl OutputFormat {
    fn csv(self) -> bool {
        self != Self::Json
    }

    fn json(self) -> bool {
        self != Self::Csv
    }
}

/// A fully resolved experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub name: ExperimentName,
    pub solver: SolverConfig,
    pub nr: usize,
    pub ntheta: usize,
    /// Vertical planes of the 3D oracle.
    pub nz: usize,
    /// Peak speed of the random initial data.
    pub peak_speed: f64,
    /// Random fields in a sweep or constants measurement.
    pub samples: usize,
    /// Relative size of the stability perturbation.
    pub perturbation: f64,
    pub oracle_dt: f64,
    pub output_dir: PathBuf,
    pub format: OutputFormat,
}

/// Recognised keys with their defaults, for `--help` and the README.
pub const KEYS: &[(&str, &str)] = &[
    ("name", "required; one of the experiment names"),
    ("nu", "0.5"),
    ("dt", "1e-3"),
    ("t_end", "2.0 (0.1 for oracle-compare)"),
    ("nr", "64 (32 for oracle-compare)"),
    ("ntheta", "64 (32 for oracle-compare)"),
    ("nz", "32"),
    ("seed", "101"),
    ("peak_speed", "1.0"),
    ("samples", "200"),
    ("perturbation", "0.1"),
    ("oracle_dt", "5e-4"),
    ("cg_tol", "1e-10"),
    ("cfl_max", "0.5"),
    ("checkpoint_every", "10"),
    ("advection", "true"),
    ("scheme", "coupled (or splitting)"),
    ("max_iterations", "400"),
    (
        "output_dir",
        "$HELIX_OUTPUT_DIR/<name>, else helixlab-out/<name>",
    ),
    ("format", "both (csv, json)"),
];

fn malformed(key: &str, value: &str, expected: &'static str) -> HelixError {
    HelixError::MalformedValue {
        key: key.to_string(),
        value: value.to_string(),
        expected,
    }
}

fn parse_num<T: FromStr>(key: &str, v: &str, expected: &'static str) -> Result<T> {
    v.parse().map_err(|_| malformed(key, v, expected))
}

/// Reads `key=value` lines; repeated keys are rejected.
fn read_pairs(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for line in text.lines() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| HelixError::Config(format!("expected key=value, found `{line}`")))?;
        let k = k.trim().to_string();
        if out.insert(k.clone(), v.trim().to_string()).is_some() {
            return Err(HelixError::Config(format!("key `{k}` given twice")));
        }
    }
    Ok(out)
}

impl ExperimentSpec {
    /// Documented defaults for `name`, with the output directory resolved
    /// from the environment.
    pub fn defaults(name: ExperimentName) -> Self {
        let base = std::env::var_os(OUTPUT_ENV)
            .map(PathBuf::from)
            .unwrap_or_else(|| PathBuf::from("helixlab-out"));
        let mut spec = Self {
            name,
            solver: SolverConfig {
                seed: 101,
                ..SolverConfig::default()
            },
            nr: 64,
            ntheta: 64,
            nz: 32,
            peak_speed: 1.0,
            samples: 200,
            perturbation: 0.1,
            oracle_dt: 5e-4,
            output_dir: base.join(name.as_str()),
            format: OutputFormat::Both,
        };
        if name == ExperimentName::OracleCompare {
            spec.nr = 32;
            spec.ntheta = 32;
            spec.solver.t_end = 0.1;
        }
        spec
    }

    fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let s = &mut self.solver;
        match key {
            "name" => {}
            "nu" => s.nu = parse_num(key, v, "a number")?,
            "dt" => s.dt = parse_num(key, v, "a number")?,
            "t_end" => s.t_end = parse_num(key, v, "a number")?,
            "cg_tol" => s.cg_tol = parse_num(key, v, "a number")?,
            "cfl_max" => s.cfl_max = parse_num(key, v, "a number")?,
            "checkpoint_every" => s.checkpoint_every = parse_num(key, v, "a whole number")?,
            "max_iterations" => s.max_iterations = parse_num(key, v, "a whole number")?,
            "seed" => s.seed = parse_num(key, v, "a whole number")?,
            "advection" => s.advection_on = parse_num(key, v, "true or false")?,
            "scheme" => {
                s.scheme = match v {
                    "coupled" => TimeScheme::Coupled,
                    "splitting" => TimeScheme::Splitting,
                    _ => return Err(malformed(key, v, "coupled or splitting")),
                }
            }
            "nr" => self.nr = parse_num(key, v, "a whole number")?,
            "ntheta" => self.ntheta = parse_num(key, v, "a whole number")?,
            "nz" => self.nz = parse_num(key, v, "a whole number")?,
            "peak_speed" => self.peak_speed = parse_num(key, v, "a number")?,
            "samples" => self.samples = parse_num(key, v, "a whole number")?,
            "perturbation" => self.perturbation = parse_num(key, v, "a number")?,
            "oracle_dt" => self.oracle_dt = parse_num(key, v, "a number")?,
            "output_dir" => self.output_dir = PathBuf::from(v),
            "format" => {
                self.format = match v {
                    "csv" => OutputFormat::Csv,
                    "json" => OutputFormat::Json,
                    "both" => OutputFormat::Both,
                    _ => return Err(malformed(key, v, "csv, json or both")),
                }
            }
            _ => return Err(HelixError::UnknownKey(key.to_string())),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        let disk = 4..=MAX_DISK_EXTENT;
        if !disk.contains(&self.nr) || !disk.contains(&self.ntheta) {
            return Err(HelixError::Config(format!(
                "disk grid {}x{} outside 4..={MAX_DISK_EXTENT}",
                self.nr, self.ntheta
            )));
        }
        if !(4..=MAX_VERTICAL_EXTENT).contains(&self.nz) || self.nz % 2 != 0 {
            return Err(HelixError::Config(format!(
                "nz = {} must be even and within 4..={MAX_VERTICAL_EXTENT}",
                self.nz
            )));
        }
        if !(self.peak_speed > 0.0 && self.perturbation >= 0.0 && self.oracle_dt > 0.0) {
            return Err(HelixError::Config(
                "peak_speed and oracle_dt must be positive, perturbation non-negative".into(),
            ));
        }
        if self.samples == 0 {
            return Err(HelixError::Config("samples must be at least 1".into()));
        }
        Ok(())
    }
}

/// Resolves file text and `key=value` overrides into a spec.
pub fn parse_config(text: &str, overrides: &[String]) -> Result<ExperimentSpec> {
    let mut pairs = read_pairs(text)?;
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| HelixError::Config(format!("override `{o}` is not key=value")))?;
        pairs.insert(k.trim().to_string(), v.trim().to_string());
    }
    if let Some(k) = pairs
        .keys()
        .find(|k| !KEYS.iter().any(|(known, _)| known == k))
    {
        return Err(HelixError::UnknownKey(k.clone()));
    }
    let name: ExperimentName = pairs
        .get("name")
        .ok_or_else(|| HelixError::MissingKey("name".into()))?
        .parse()?;
    let mut spec = ExperimentSpec::defaults(name);
    for (k, v) in &pairs {
        spec.set(k, v)?;
    }
    spec.validate()?;
    Ok(spec)
}

// -------------------------------------------------------------------
// running

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundVerdict {
    pub name: String,
    pub passed: bool,
    pub worst_ratio: f64,
}

/// One-line record closing every run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub experiment: ExperimentName,
    pub passed: bool,
    pub bounds: Vec<BoundVerdict>,
    pub c0: Option<f64>,
    pub c_star: Option<f64>,
    pub max_ladyzhenskaya_ratio: Option<f64>,
    pub wall_clock_s: f64,
    pub failure_stage: Option<String>,
    pub failure: Option<String>,
}

/// What an experiment produced before the summary is assembled.
#[derive(Default)]
struct Outcome {
    reports: Vec<BoundReport>,
    c0: Option<f64>,
    c_star: Option<f64>,
    lady_max: Option<f64>,
    failure: Option<(String, String)>,
}

impl Outcome {
    fn fail(&mut self, stage: &str, e: HelixError) {
        self.failure = Some((stage.to_string(), e.to_string()));
    }
}

/// Fallible step inside an experiment: records the stage on failure.
macro_rules! stage {
    ($out:expr, $name:expr, $e:expr) => {
        match $e {
            Ok(v) => v,
            Err(err) => {
                $out.fail($name, err);
                return Ok(());
            }
        }
    };
}

struct Writer<'a> {
    dir: &'a Path,
    format: OutputFormat,
}

impl Writer<'_> {
    fn table<T: Serialize>(&self, file: &str, rows: &[T]) -> Result<()> {
        if !self.format.csv() {
            return Ok(());
        }
        let io = |e: csv::Error| HelixError::Io(e.to_string());
        let mut w = csv::Writer::from_path(self.dir.join(file)).map_err(io)?;
        for r in rows {
            w.serialize(r).map_err(io)?;
        }
        w.flush()?;
        Ok(())
    }

    fn json<T: Serialize>(&self, file: &str, value: &T) -> Result<()> {
        if !self.format.json() {
            return Ok(());
        }
        let text = serde_json::to_string(value).map_err(|e| HelixError::Io(e.to_string()))?;
        fs::write(self.dir.join(file), text + "\n")?;
        Ok(())
    }
}

#[derive(Serialize)]
struct LedgerCsvRow {
    t: f64,
    #[serde(rename = "E")]
    e: f64,
    #[serde(rename = "Gh")]
    gh: f64,
    #[serde(rename = "Gfull")]
    gfull: f64,
    #[serde(rename = "H1")]
    h1: f64,
    div_res: f64,
    decay_bound_rhs: f64,
}

fn ledger_rows(ledger: &EnergyLedger, c0: f64) -> Vec<LedgerCsvRow> {
    let e0 = ledger.initial_energy().unwrap_or(0.0);
    ledger
        .rows
        .iter()
        .map(|r| LedgerCsvRow {
            t: r.t,
            e: r.energy,
            gh: r.gh,
            gfull: r.gfull,
            h1: r.h1,
            div_res: r.div_res,
            decay_bound_rhs: decay_rhs(e0, ledger.nu, c0, r.t),
        })
        .collect()
}

/// Runs `spec`, writes its artifacts and returns the summary. `Err` only
/// for failures to write artifacts; numerical failures land in the
/// summary with the stage named.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Summary> {
    spec.validate()?;
    fs::create_dir_all(&spec.output_dir)?;
    let start = Instant::now();
    let w = Writer {
        dir: &spec.output_dir,
        format: spec.format,
    };
    let mut out = Outcome::default();
    info!("running {} into {}", spec.name, spec.output_dir.display());
    match spec.name {
        ExperimentName::Decay | ExperimentName::EnergyIneq => energy_runs(spec, &w, &mut out)?,
        ExperimentName::LadyzhenskayaSweep => sweep(spec, &w, &mut out)?,
        ExperimentName::Constants => constants(spec, &w, &mut out)?,
        ExperimentName::Stability => stability(spec, &w, &mut out)?,
        ExperimentName::Convergence => convergence(spec, &w, &mut out)?,
        ExperimentName::OracleCompare => oracle_compare(spec, &w, &mut out)?,
        ExperimentName::SignArbitration => signs(spec, &w, &mut out)?,
    }
    if w.format.json() {
        let lines: String = out
            .reports
            .iter()
            .map(|r| r.to_json_line() + "\n")
            .collect();
        fs::write(spec.output_dir.join("reports.jsonl"), lines)?;
    }
    let (failure_stage, failure) = out.failure.clone().unzip();
    let summary = Summary {
        experiment: spec.name,
        passed: failure.is_none()
            && !out.reports.is_empty()
            && out.reports.iter().all(|r| r.passed),
        bounds: out
            .reports
            .iter()
            .map(|r| BoundVerdict {
                name: r.bound_name.clone(),
                passed: r.passed,
                worst_ratio: r.worst_ratio(),
            })
            .collect(),
        c0: out.c0,
        c_star: out.c_star,
        max_ladyzhenskaya_ratio: out.lady_max,
        wall_clock_s: start.elapsed().as_secs_f64(),
        failure_stage,
        failure,
    };
    let text = serde_json::to_string(&summary).map_err(|e| HelixError::Io(e.to_string()))?;
    fs::write(spec.output_dir.join("summary.json"), text + "\n")?;
    Ok(summary)
}

fn disk(spec: &ExperimentSpec) -> Result<Arc<DiskGrid>> {
    Ok(Arc::new(DiskGrid::new(spec.nr, spec.ntheta)?))
}

fn energy_runs(spec: &ExperimentSpec, w: &Writer, out: &mut Outcome) -> Result<()> {
    let grid = stage!(out, "grid", disk(spec));
    let c0 = stage!(out, "poincare-constant", poincare_constant(&grid));
    out.c0 = Some(c0);
    let w0 = random_helical_field(grid.clone(), spec.solver.seed, spec.peak_speed);
    let solver = stage!(out, "solver-setup", Solver::new(spec.solver.clone(), grid));
    let (state, ledger) = solver.run_recorded(&w0);
    w.table("ledger.csv", &ledger_rows(&ledger, c0))?;
    let state = stage!(out, "solver", state);
    checkpoint::save(&w.dir.join("final.ckpt"), &state.w, state.t, spec.solver.nu)?;
    let [exp, ineq, weighted] = stage!(out, "bounds", verify_decay(&ledger, spec.solver.nu, c0));
    if spec.name == ExperimentName::EnergyIneq {
        let e0 = ledger.initial_energy().unwrap_or(0.0);
        let mut law = BoundReport::new("energy-law", 0.0)
            .with_note("lhs: total |defect| of the per-step energy law; rhs: 1e-6 E(0)");
        law.push(state.t, ledger.total_defect(), 1e-6 * e0);
        out.reports.extend([ineq, law]);
    } else {
        let grad = stage!(
            out,
            "bounds",
            verify_uniform_gradient(&ledger, spec.solver.nu, c0)
        );
        let h1 = stage!(out, "bounds", verify_h1(&ledger, H1_GRONWALL_C));
        let fitted = stage!(out, "bounds", fit_h1_constant(&ledger));
        out.reports.extend([exp, weighted, grad]);
        out.reports
            .extend(h1.map(|r| r.with_note(format!("fitted C on this run: {fitted:.6}"))));
    }
    Ok(())
}

#[derive(Serialize)]
struct SweepRow {
    seed: u64,
    interior: f64,
    dirichlet: f64,
}

fn bowl_report(grid: Arc<DiskGrid>) -> Result<BoundReport> {
    use std::f64::consts::PI;
    let b = SliceField::from_fn(grid, |x, y| Vec3::new(0.0, 0.0, 1.0 - x * x - y * y));
    let n = SliceNorms::of(&b);
    let l4 = norm(&b, NormKind::L4, Domain::Disk)?.powi(4);
    let mut r = BoundReport::new("bowl-norms", 0.0)
        .with_note("relative errors of ‖w‖², ‖w‖⁴_L4 and ‖∇w‖² against π/3, π/5 and 2π");
    for (got, exact) in [(n.l2_sq, PI / 3.0), (l4, PI / 5.0), (n.grad_h_sq, 2.0 * PI)] {
        r.push(0.0, (got / exact - 1.0).abs(), 5e-3);
    }
    Ok(r)
}

fn sweep(spec: &ExperimentSpec, w: &Writer, out: &mut Outcome) -> Result<()> {
    let grid = stage!(out, "grid", disk(spec));
    let mut rows = Vec::with_capacity(spec.samples);
    let mut lady =
        BoundReport::new("ladyzhenskaya-interior", 0.0).with_note("t is the sample index");
    for s in 0..spec.samples as u64 {
        let seed = spec.solver.seed.wrapping_add(s);
        let f = random_dirichlet_field(grid.clone(), seed);
        let interior = stage!(out, "sweep", ladyzhenskaya_ratio(&f, LadyVariant::Interior));
        let dirichlet = stage!(
            out,
            "sweep",
            ladyzhenskaya_ratio(&f, LadyVariant::Dirichlet)
        );
        lady.push(s as f64, interior, 1.0);
        rows.push(SweepRow {
            seed,
            interior,
            dirichlet,
        });
    }
    w.table("sweep.csv", &rows)?;
    out.lady_max = Some(rows.iter().map(|r| r.interior).fold(0.0, f64::max));
    let bowl = stage!(out, "spot-check", bowl_report(grid));
    out.reports.extend([lady, bowl]);
    Ok(())
}

fn constants(spec: &ExperimentSpec, w: &Writer, out: &mut Outcome) -> Result<()> {
    let grid = stage!(out, "grid", disk(spec));
    let k = stage!(
        out,
        "constants",
        measure_constants(grid, spec.solver.seed, spec.samples)
    );
    w.json("constants.json", &k)?;
    w.table("constants.csv", &[k])?;
    out.c0 = Some(k.c0);
    out.c_star = Some(k.c_star);
    out.lady_max = Some(k.lady_c);
    let exact = 1.0 / (J01 * J01);
    let mut c0 = BoundReport::new("poincare-constant", 0.0).with_note(format!(
        "lhs: relative distance of c0 = {:.6} from 1/j01² = {exact:.6}",
        k.c0
    ));
    c0.push(0.0, (k.c0 / exact - 1.0).abs(), 0.01);
    let mut lady = BoundReport::new("ladyzhenskaya-interior", 0.0);
    lady.push(0.0, k.lady_c, 1.0);
    out.reports.extend([c0, lady]);
    Ok(())
}

#[derive(Serialize)]
struct StabilityRow {
    t: f64,
    diff_sq: f64,
    bound: f64,
    identical_diff_sq: f64,
}

fn stability(spec: &ExperimentSpec, w: &Writer, out: &mut Outcome) -> Result<()> {
    let grid = stage!(out, "grid", disk(spec));
    let k: Constants = stage!(
        out,
        "constants",
        measure_constants(grid.clone(), spec.solver.seed, spec.samples)
    );
    out.c0 = Some(k.c0);
    out.c_star = Some(k.c_star);
    let u0 = random_helical_field(grid.clone(), spec.solver.seed, spec.peak_speed);
    let dv = random_helical_field(
        grid.clone(),
        spec.solver.seed.wrapping_add(1),
        spec.peak_speed,
    );
    let v0 = u0.axpy(spec.perturbation, &dv);
    let solver = stage!(out, "solver-setup", Solver::new(spec.solver.clone(), grid));
    let pair = stage!(out, "perturbed-pair", solver.run_pair(&u0, &v0));
    let same = stage!(out, "identical-pair", solver.run_pair(&u0, &u0));
    let report = stage!(
        out,
        "bounds",
        verify_stability(&pair.ledger_u, &pair.ledger_v, &pair.diff, &k)
    );
    let mut unique = BoundReport::new("uniqueness", 0.0).with_note("identical data, rhs 1e-10");
    for (t, d) in same.diff.t.iter().zip(&same.diff.diff_sq) {
        unique.push(*t, *d, 1e-10);
    }
    let e0 = pair.ledger_u.initial_energy().unwrap_or(0.0);
    let bound = pair.diff.diff_sq.first().copied().unwrap_or(0.0)
        * stability_factor(&k, spec.solver.nu, e0);
    let rows: Vec<StabilityRow> = pair
        .diff
        .t
        .iter()
        .zip(&pair.diff.diff_sq)
        .zip(&same.diff.diff_sq)
        .map(|((&t, &diff_sq), &identical_diff_sq)| StabilityRow {
            t,
            diff_sq,
            bound,
            identical_diff_sq,
        })
        .collect();
    w.table("stability.csv", &rows)?;
    w.table("ledger.csv", &ledger_rows(&pair.ledger_u, k.c0))?;
    out.reports.extend([report, unique]);
    Ok(())
}

#[derive(Serialize)]
struct ConvergenceRow {
    kind: &'static str,
    level: f64,
    error: f64,
    order: Option<f64>,
}

/// Grids and steps of the order study; the configured grid and step are
/// used for the one-step amplification check.
pub const SPACE_LEVELS: [usize; 3] = [16, 32, 64];
pub const TIME_LEVELS: [f64; 4] = [0.01, 0.005, 0.0025, 0.00125];
pub const MIN_ORDER: f64 = 1.8;

fn convergence(spec: &ExperimentSpec, w: &Writer, out: &mut Outcome) -> Result<()> {
    let m = Arc::new(Manufactured::new(spec.solver.seed, spec.solver.nu));
    let space = stage!(
        out,
        "space-study",
        spatial_order(&m, &SPACE_LEVELS, 1e-3, 0.1)
    );
    let time = stage!(out, "time-study", temporal_order(&m, 24, &TIME_LEVELS, 0.2));
    let mut rows = Vec::new();
    for (kind, study) in [("space", &space), ("time", &time)] {
        for (i, (&level, &error)) in study.levels.iter().zip(&study.errors).enumerate() {
            let order = i.checked_sub(1).map(|p| study.orders[p]);
            rows.push(ConvergenceRow {
                kind,
                level,
                error,
                order,
            });
        }
    }
    w.table("convergence.csv", &rows)?;
    let mut reports = Vec::new();
    for (name, study) in [("spatial-order", &space), ("temporal-order", &time)] {
        let mut r =
            BoundReport::new(name, 0.0).with_note("lhs: required order; rhs: observed order");
        for (level, order) in study.levels[1..].iter().zip(&study.orders) {
            r.push(*level, MIN_ORDER, *order);
        }
        reports.push(r);
    }
    let grid = stage!(out, "grid", disk(spec));
    let (measured, expected) = stage!(
        out,
        "eigen-step",
        eigen_step_factor(grid, spec.solver.nu, spec.solver.dt)
    );
    let mut cn = BoundReport::new("cn-amplification", 0.0).with_note(format!(
        "measured {measured:.12}, Crank–Nicolson {expected:.12}"
    ));
    cn.push(spec.solver.dt, (measured - expected).abs(), 1e-6);
    reports.push(cn);
    out.reports.extend(reports);
    Ok(())
}

fn oracle_compare(spec: &ExperimentSpec, w: &Writer, out: &mut Outcome) -> Result<()> {
    let cfg = CompareConfig {
        nu: spec.solver.nu,
        t_end: spec.solver.t_end,
        nr: spec.nr,
        ntheta: spec.ntheta,
        nz: spec.nz,
        seed: spec.solver.seed,
        peak_speed: spec.peak_speed,
        slice_dt: spec.solver.dt,
        oracle_dt: spec.oracle_dt,
    };
    let c = stage!(out, "oracle-compare", compare_slice_vs_3d(&cfg));
    w.table("comparison.csv", &[&c])?;
    w.json("comparison.json", &c)?;
    out.reports.push(c.report(0.05));
    Ok(())
}

#[derive(Serialize)]
struct SignRow {
    sign: &'static str,
    relative_error: f64,
}

fn signs(spec: &ExperimentSpec, w: &Writer, out: &mut Outcome) -> Result<()> {
    let grid = stage!(out, "grid", disk(spec));
    let f = random_helical_field(grid, spec.solver.seed, spec.peak_speed);
    let a = stage!(out, "sign-arbitration", sign_arbitration(&f));
    w.table(
        "signs.csv",
        &[
            SignRow {
                sign: "rotational",
                relative_error: a.rotational_error,
            },
            SignRow {
                sign: "reversed",
                relative_error: a.reversed_error,
            },
        ],
    )?;
    let mut r = BoundReport::new("sign-arbitration", 0.0).with_note(format!(
        "winner {:?}; lhs: 10 x winner error, rhs: loser error",
        a.winner()
    ));
    let (win, lose) = match a.winner() {
        VerticalSign::Rotational => (a.rotational_error, a.reversed_error),
        VerticalSign::Reversed => (a.reversed_error, a.rotational_error),
    };
    r.push(0.0, 10.0 * win, lose);
    let mut expected = BoundReport::new("rotational-sign-wins", 0.0);
    expected.push(0.0, a.rotational_error, a.reversed_error);
    out.reports.extend([r, expected]);
    Ok(())
}

// -------------------------------------------------------------------
// command line

#[derive(Parser, Debug)]
#[command(
    name = "helixlab",
    version,
    about = "Helical Navier–Stokes experiments and bound checks"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Exponential decay, weighted dissipation, gradient and H¹ bounds.
    Decay(RunArgs),
    /// Weak energy inequality and the per-step energy law.
    EnergyIneq(RunArgs),
    /// Interior Ladyzhenskaya ratio over random no-slip slices.
    LadyzhenskayaSweep(RunArgs),
    /// Poincaré, gradient-equivalence and Ladyzhenskaya constants.
    Constants(RunArgs),
    /// Perturbed and identical run pairs against the stability bound.
    Stability(RunArgs),
    /// Manufactured-solution orders and the Crank–Nicolson factor.
    Convergence(RunArgs),
    /// Slice solver against the 3D reference solver.
    OracleCompare(RunArgs),
    /// Which sign of the vertical derivative matches 3D differences.
    SignArbitration(RunArgs),
}

impl Command {
    fn parts(&self) -> (ExperimentName, &RunArgs) {
        use ExperimentName as N;
        match self {
            Command::Decay(a) => (N::Decay, a),
            Command::EnergyIneq(a) => (N::EnergyIneq, a),
            Command::LadyzhenskayaSweep(a) => (N::LadyzhenskayaSweep, a),
            Command::Constants(a) => (N::Constants, a),
            Command::Stability(a) => (N::Stability, a),
            Command::Convergence(a) => (N::Convergence, a),
            Command::OracleCompare(a) => (N::OracleCompare, a),
            Command::SignArbitration(a) => (N::SignArbitration, a),
        }
    }
}

/// Flags mirror the configuration keys; `--set key=value` reaches any key.
#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// File of key=value lines.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Extra override, repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[arg(long)]
    pub nu: Option<String>,
    #[arg(long)]
    pub dt: Option<String>,
    #[arg(long)]
    pub t_end: Option<String>,
    #[arg(long)]
    pub nr: Option<String>,
    #[arg(long)]
    pub ntheta: Option<String>,
    #[arg(long)]
    pub nz: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub samples: Option<String>,
    #[arg(long)]
    pub scheme: Option<String>,
    #[arg(long)]
    pub output_dir: Option<String>,
    #[arg(long)]
    pub format: Option<String>,
}

impl RunArgs {
    fn overrides(&self, name: ExperimentName) -> Vec<String> {
        let mut o = vec![format!("name={name}")];
        let flags = [
            ("nu", &self.nu),
            ("dt", &self.dt),
            ("t_end", &self.t_end),
            ("nr", &self.nr),
            ("ntheta", &self.ntheta),
            ("nz", &self.nz),
            ("seed", &self.seed),
            ("samples", &self.samples),
            ("scheme", &self.scheme),
            ("output_dir", &self.output_dir),
            ("format", &self.format),
        ];
        o.extend(self.set.iter().cloned());
        o.extend(
            flags
                .iter()
                .filter_map(|(k, v)| v.as_ref().map(|v| format!("{k}={v}"))),
        );
        o
    }
}

/// Resolves the spec a parsed command line describes.
pub fn spec_from_cli(cli: &Cli) -> Result<ExperimentSpec> {
    let (name, args) = cli.command.parts();
    let text = match &args.config {
        Some(p) => fs::read_to_string(p)?,
        None => String::new(),
    };
    let spec = parse_config(&text, &args.overrides(name))?;
    if spec.name != name {
        return Err(HelixError::Config(format!(
            "config names `{}` but the subcommand is `{name}`",
            spec.name
        )));
    }
    Ok(spec)
}

/// Entry point of the binary; returns the process exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let spec = match spec_from_cli(&cli) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("helixlab: {e}");
            return 2;
        }
    };
    match run_experiment(&spec) {
        Ok(s) => {
            for b in &s.bounds {
                println!(
                    "{:<24} {} (worst lhs/rhs {:.4})",
                    b.name,
                    if b.passed { "pass" } else { "FAIL" },
                    b.worst_ratio
                );
            }
            if let (Some(stage), Some(msg)) = (&s.failure_stage, &s.failure) {
                println!("failed at {stage}: {msg}");
            }
            println!(
                "summary: {}",
                spec.output_dir.join("summary.json").display()
            );
            i32::from(!s.passed)
        }
        Err(e) => {
            eprintln!("helixlab: {e}");
            2
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_file_gets_defaults() {
        let spec = parse_config(
            "name=decay\nnu=0.5\nnr=64\nntheta=64\ndt=1e-3\nt_end=2.0\n",
            &[],
        )
        .unwrap();
        assert_eq!(spec.name, ExperimentName::Decay);
        assert_eq!(spec.solver.nu, 0.5);
        assert_eq!(spec.solver.scheme, TimeScheme::Coupled);
        assert_eq!(spec.format, OutputFormat::Both);
        assert_eq!(spec.samples, 200);
    }

    #[test]
    fn unknown_key_is_named() {
        let err = parse_config("name=decay\nviscosty=0.5\n", &[]).unwrap_err();
        assert_eq!(err, HelixError::UnknownKey("viscosty".into()));
        assert!(err.to_string().contains("viscosty"));
        let err = parse_config("name=decay", &["nnr=3".into()]).unwrap_err();
        assert_eq!(err, HelixError::UnknownKey("nnr".into()));
    }

    #[test]
    fn overrides_win() {
        let spec = parse_config("name=decay\nnu=0.1\n", &["nu=0.5".into()]).unwrap();
        assert_eq!(spec.solver.nu, 0.5);
    }

    #[test]
    fn malformed_and_missing_keys_are_named() {
        let err = parse_config("name=decay\nnr=many\n", &[]).unwrap_err();
        assert!(matches!(err, HelixError::MalformedValue { ref key, .. } if key == "nr"));
        assert_eq!(
            parse_config("nu=0.5\n", &[]).unwrap_err(),
            HelixError::MissingKey("name".into())
        );
        assert!(parse_config("name=decay\nnu=0.5\nnu=0.4\n", &[]).is_err());
        assert!(parse_config("name=nothing\n", &[]).is_err());
        assert!(parse_config("name=decay\nnr=100000\n", &[]).is_err());
        assert!(parse_config("name=decay\nscheme=rk4\n", &[]).is_err());
    }

    #[test]
    fn comments_and_blank_lines_are_ignored() {
        let spec =
            parse_config("# run\n\nname = constants # trailing\n samples = 5\n", &[]).unwrap();
        assert_eq!(spec.name, ExperimentName::Constants);
        assert_eq!(spec.samples, 5);
    }

    #[test]
    fn oracle_compare_defaults_are_coarse() {
        let spec = parse_config("name=oracle-compare", &[]).unwrap();
        assert_eq!((spec.nr, spec.ntheta, spec.nz), (32, 32, 32));
        assert_eq!(spec.solver.t_end, 0.1);
    }

    #[test]
    fn every_name_round_trips() {
        for n in ExperimentName::ALL {
            assert_eq!(n.as_str().parse::<ExperimentName>().unwrap(), n);
        }
    }

    #[test]
    fn command_line_flags_become_overrides() {
        let cli =
            Cli::try_parse_from(["helixlab", "constants", "--nr", "16", "--set", "samples=3"])
                .unwrap();
        let spec = spec_from_cli(&cli).unwrap();
        assert_eq!(
            (spec.name, spec.nr, spec.samples),
            (ExperimentName::Constants, 16, 3)
        );
        assert!(Cli::try_parse_from(["helixlab", "bogus"]).is_err());
    }

    fn quick(name: &str, dir: &Path, extra: &[&str]) -> ExperimentSpec {
        let mut o: Vec<String> = vec![format!("output_dir={}", dir.display())];
        o.extend(extra.iter().map(|s| s.to_string()));
        parse_config(&format!("name={name}\n"), &o).unwrap()
    }

    #[test]
    fn decay_run_writes_artifacts_and_bound_dominates() {
        let dir = tempfile::tempdir().unwrap();
        let spec = quick(
            "decay",
            dir.path(),
            &["nr=16", "ntheta=16", "t_end=0.1", "dt=5e-3"],
        );
        let s = run_experiment(&spec).unwrap();
        assert!(s.passed, "{s:?}");
        let mut rd = csv::Reader::from_path(dir.path().join("ledger.csv")).unwrap();
        let head: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
        assert_eq!(
            head,
            ["t", "E", "Gh", "Gfull", "H1", "div_res", "decay_bound_rhs"]
        );
        let mut rows = 0;
        for rec in rd.records() {
            let rec = rec.unwrap();
            let e: f64 = rec[1].parse().unwrap();
            let bound: f64 = rec[6].parse().unwrap();
            assert!(e <= bound * 1.02);
            rows += 1;
        }
        assert_eq!(rows, 3);
        let reports = fs::read_to_string(dir.path().join("reports.jsonl")).unwrap();
        assert_eq!(reports.lines().count(), s.bounds.len());
        let back: Summary =
            serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap())
                .unwrap();
        assert_eq!(back.bounds, s.bounds);
        assert!(checkpoint::load(&dir.path().join("final.ckpt")).is_ok());
    }

    #[test]
    fn identical_runs_give_identical_ledgers() {
        let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
        let extra = ["nr=12", "ntheta=12", "t_end=0.05", "dt=5e-3", "format=csv"];
        run_experiment(&quick("energy-ineq", a.path(), &extra)).unwrap();
        run_experiment(&quick("energy-ineq", b.path(), &extra)).unwrap();
        let read = |d: &Path| fs::read(d.join("ledger.csv")).unwrap();
        assert_eq!(read(a.path()), read(b.path()));
        assert!(!a.path().join("reports.jsonl").exists());
    }

    #[test]
    fn solver_failure_names_the_stage() {
        let dir = tempfile::tempdir().unwrap();
        let spec = quick(
            "decay",
            dir.path(),
            &["nr=8", "ntheta=8", "t_end=0.5", "dt=0.25", "peak_speed=5"],
        );
        let s = run_experiment(&spec).unwrap();
        assert!(!s.passed);
        assert_eq!(s.failure_stage.as_deref(), Some("solver"));
    }

    #[test]
    fn small_sweep_and_signs_pass() {
        let dir = tempfile::tempdir().unwrap();
        let s = run_experiment(&quick(
            "ladyzhenskaya-sweep",
            dir.path(),
            &["samples=5", "nr=32", "ntheta=32"],
        ))
        .unwrap();
        assert!(s.passed, "{s:?}");
        assert!(s.max_ladyzhenskaya_ratio.unwrap() <= 1.0);
        let s = run_experiment(&quick(
            "sign-arbitration",
            dir.path(),
            &["nr=16", "ntheta=32"],
        ))
        .unwrap();
        assert!(s.passed, "{s:?}");
    }

    #[test]
    fn stability_with_identical_data_is_exact() {
        let dir = tempfile::tempdir().unwrap();
        let extra = [
            "nr=12",
            "ntheta=12",
            "t_end=0.05",
            "dt=5e-3",
            "samples=4",
            "perturbation=0",
        ];
        let s = run_experiment(&quick("stability", dir.path(), &extra)).unwrap();
        assert!(
            s.bounds
                .iter()
                .find(|b| b.name == "uniqueness")
                .unwrap()
                .passed
        );
        let mut rd = csv::Reader::from_path(dir.path().join("stability.csv")).unwrap();
        for rec in rd.records() {
            assert!(rec.unwrap()[1].parse::<f64>().unwrap() <= 1e-10);
        }
    }
}
