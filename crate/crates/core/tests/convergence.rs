//! Observed orders of accuracy against a forced exact solution.

use std::sync::Arc;

use helical_flow::fields::Manufactured;
use helical_flow::solver::{Forcing, Solver, SolverConfig};
use helical_flow::{DiskGrid, SliceField};

fn forced_run(m: &Arc<Manufactured>, n: usize, dt: f64, t_end: f64) -> SliceField {
    let g = Arc::new(DiskGrid::new(n, n).unwrap());
    let cfg = SolverConfig {
        nu: m.nu,
        dt,
        t_end,
        cg_tol: 1e-12,
        checkpoint_every: 1000,
        ..SolverConfig::default()
    };
    let (mm, gg) = (m.clone(), g.clone());
    let forcing: Arc<Forcing> = Arc::new(move |t| mm.forcing_at(&gg, t));
    let solver = Solver::new(cfg, g.clone()).unwrap().with_forcing(forcing);
    solver.run(&m.exact(g, 0.0)).unwrap().0.w
}

fn distance(a: &SliceField, b: &SliceField) -> f64 {
    let d = a.axpy(-1.0, b);
    d.inner(&d).sqrt()
}

#[test]
fn spatial_order_is_second() {
    let m = Arc::new(Manufactured::new(21, 0.5));
    let t_end = 0.1;
    let errs: Vec<f64> = [16, 32, 64]
        .iter()
        .map(|&n| {
            let w = forced_run(&m, n, 1e-3, t_end);
            distance(&w, &m.exact(w.grid.clone(), t_end))
        })
        .collect();
    let orders: Vec<f64> = errs.windows(2).map(|e| (e[0] / e[1]).log2()).collect();
    println!("space errors {errs:?} orders {orders:?}");
    assert!(orders[1] >= 1.8, "errors {errs:?}");
}

#[test]
fn temporal_order_is_second() {
    let m = Arc::new(Manufactured::new(21, 0.5));
    let t_end = 0.2;
    let runs: Vec<SliceField> = [0.01, 0.005, 0.0025, 0.00125]
        .iter()
        .map(|&dt| forced_run(&m, 24, dt, t_end))
        .collect();
    let diffs: Vec<f64> = runs.windows(2).map(|w| distance(&w[0], &w[1])).collect();
    let orders: Vec<f64> = diffs.windows(2).map(|d| (d[0] / d[1]).log2()).collect();
    println!("time differences {diffs:?} orders {orders:?}");
    assert!(orders.iter().all(|o| *o >= 1.8), "differences {diffs:?}");
}
