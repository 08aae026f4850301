//! Observed orders against a forced exact solution, and the one-step
//! Crank–Nicolson factor of the Stokes ground state.

use std::sync::Arc;

use helical_flow::fields::Manufactured;
use helical_flow::solver::{eigen_step_factor, spatial_order, temporal_order};
use helical_flow::DiskGrid;

fn main() -> helical_flow::Result<()> {
    let m = Arc::new(Manufactured::new(21, 0.5));
    let space = spatial_order(&m, &[16, 32, 64], 1e-3, 0.1)?;
    println!(
        "space: errors {:?}, orders {:?}",
        space.errors, space.orders
    );
    let time = temporal_order(&m, 24, &[0.01, 0.005, 0.0025], 0.2)?;
    println!(
        "time:  differences {:?}, orders {:?}",
        time.errors, time.orders
    );
    let (measured, expected) = eigen_step_factor(Arc::new(DiskGrid::new(32, 32)?), 0.5, 1e-3)?;
    println!("one Stokes step: {measured:.15} vs {expected:.15}");
    Ok(())
}
