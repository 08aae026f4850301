//! Two nearby solutions, run side by side, against the stability bound.

use std::sync::Arc;

use helical_flow::estimates::{measure_constants, stability_factor, verify_stability};
use helical_flow::fields::random_helical_field;
use helical_flow::solver::{Solver, SolverConfig};
use helical_flow::DiskGrid;

fn main() -> helical_flow::Result<()> {
    let grid = Arc::new(DiskGrid::new(24, 24)?);
    let k = measure_constants(grid.clone(), 7, 50)?;
    let u0 = random_helical_field(grid.clone(), 7, 1.0);
    let v0 = u0.axpy(0.05, &random_helical_field(grid.clone(), 8, 1.0));
    let cfg = SolverConfig {
        t_end: 1.0,
        checkpoint_every: 100,
        ..SolverConfig::default()
    };
    let pair = Solver::new(cfg.clone(), grid)?.run_pair(&u0, &v0)?;
    let e0 = pair.ledger_u.initial_energy().unwrap_or(0.0);
    println!(
        "c* = {:.4}, c0 = {:.4}, factor = {:.3e}",
        k.c_star,
        k.c0,
        stability_factor(&k, cfg.nu, e0)
    );
    for (t, d) in pair.diff.t.iter().zip(&pair.diff.diff_sq) {
        println!("t = {t:.2}  ‖u - v‖² = {d:.4e}");
    }
    let r = verify_stability(&pair.ledger_u, &pair.ledger_v, &pair.diff, &k)?;
    println!(
        "{}: {}",
        r.bound_name,
        if r.passed { "holds" } else { "violated" }
    );
    Ok(())
}
