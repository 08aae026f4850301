//! Dump a slice state, read it back and continue it in 3D.

use std::sync::Arc;

use helical_flow::checkpoint;
use helical_flow::fields::random_helical_field;
use helical_flow::oracle3d::{Cylinder3DState, Oracle3d, Oracle3dConfig};
use helical_flow::solver::{Solver, SolverConfig};
use helical_flow::DiskGrid;

fn main() -> helical_flow::Result<()> {
    let grid = Arc::new(DiskGrid::new(16, 16)?);
    let cfg = SolverConfig {
        t_end: 0.05,
        ..SolverConfig::default()
    };
    let (state, _) =
        Solver::new(cfg.clone(), grid.clone())?.run(&random_helical_field(grid, 3, 1.0))?;

    let path = std::env::temp_dir().join("helical-flow-example.ckpt");
    checkpoint::save(&path, &state.w, state.t, cfg.nu)?;
    let ck = checkpoint::load(&path)?;
    println!("read {} at t = {}, nu = {}", path.display(), ck.t, ck.nu);

    let oracle = Oracle3d::new(
        Oracle3dConfig {
            nu: ck.nu,
            ..Oracle3dConfig::default()
        },
        16,
        16,
        16,
    )?;
    let s = Cylinder3DState::from_checkpoint(&ck, 16)?;
    println!("3D energy at t = {:.3}: {:.6e}", s.t, s.energy());
    let s = oracle.run(s, 0.05)?;
    println!("3D energy at t = {:.3}: {:.6e}", s.t, s.energy());
    println!(
        "divergence residual {:.2e}",
        oracle.divergence_residual(&s.u)?
    );
    Ok(())
}
