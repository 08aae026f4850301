//! One nonlinear run with the energy ledger checked against the decay,
//! energy-inequality, dissipation, gradient and H¹ bounds.
//!
//! `cargo run --release --example energy_decay -- [n] [t_end]`

use std::sync::Arc;

use helical_flow::estimates::{verify_decay, verify_h1, verify_uniform_gradient, H1_GRONWALL_C};
use helical_flow::fields::random_helical_field;
use helical_flow::solver::{Solver, SolverConfig};
use helical_flow::{poincare_constant, DiskGrid};

fn main() -> helical_flow::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: usize = args.next().and_then(|a| a.parse().ok()).unwrap_or(32);
    let t_end: f64 = args.next().and_then(|a| a.parse().ok()).unwrap_or(1.0);

    let grid = Arc::new(DiskGrid::new(n, n)?);
    let c0 = poincare_constant(&grid)?;
    let cfg = SolverConfig {
        t_end,
        checkpoint_every: 100,
        ..SolverConfig::default()
    };
    let nu = cfg.nu;
    let w0 = random_helical_field(grid.clone(), 101, 1.0);
    let (_, ledger) = Solver::new(cfg, grid)?.run(&w0)?;

    println!(
        "{:>6} {:>12} {:>12} {:>12} {:>10}",
        "t", "E", "Gh", "H1", "div_res"
    );
    for r in &ledger.rows {
        println!(
            "{:>6.2} {:>12.5e} {:>12.5e} {:>12.5e} {:>10.2e}",
            r.t, r.energy, r.gh, r.h1, r.div_res
        );
    }
    let mut reports = verify_decay(&ledger, nu, c0)?.to_vec();
    reports.push(verify_uniform_gradient(&ledger, nu, c0)?);
    reports.extend(verify_h1(&ledger, H1_GRONWALL_C)?);
    for r in &reports {
        println!(
            "{:<22} {:<5} worst lhs/rhs {:.4}",
            r.bound_name,
            r.passed,
            r.worst_ratio()
        );
    }
    println!("energy-law defect: total {:.2e}", ledger.total_defect());
    Ok(())
}
