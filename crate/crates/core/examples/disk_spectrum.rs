//! The discrete Dirichlet ground state of the disk against `j01²`.

use helical_flow::grid::dirichlet_ground_state;
use helical_flow::{poincare_constant, DiskGrid};

const J01: f64 = 2.404_825_557_695_773;

fn main() -> helical_flow::Result<()> {
    println!("{:>5} {:>12} {:>12}", "n", "lambda1", "rel. error");
    for n in [16, 32, 64, 128] {
        let g = DiskGrid::new(n, n)?;
        let lambda = 1.0 / poincare_constant(&g)?;
        println!(
            "{n:>5} {lambda:>12.6} {:>12.3e}",
            lambda / (J01 * J01) - 1.0
        );
    }
    let g = DiskGrid::new(32, 32)?;
    let (lambda, phi) = dirichlet_ground_state(&g, 1e-12, 500)?;
    println!(
        "ground state at 32²: λ1 = {lambda:.6}, centre value {:.4}",
        phi[0]
    );
    Ok(())
}
