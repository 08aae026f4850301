//! Lift a slice to the full cylinder and check that the lift is helical.
//!
//! The residual `‖∂_ξ u - u^⊥‖` of the extension falls at second order, and
//! only one sign of the vertical derivative matches differences across
//! planes.

use std::sync::Arc;

use helical_flow::fields::random_helical_poly;
use helical_flow::helix::{helical_residual, reconstruct, CylinderField};
use helical_flow::oracle3d::sign_arbitration;
use helical_flow::{DiskGrid, Vec3};

fn main() -> helical_flow::Result<()> {
    let poly = random_helical_poly(5);
    println!("{:>6} {:>14}", "nr", "residual");
    for n in [8, 16, 32] {
        let w = poly.sample(Arc::new(DiskGrid::new(n, 2 * n)?));
        let cyl = CylinderField::from_slice(&w, 2 * n)?;
        println!("{n:>6} {:>14.4e}", helical_residual(&cyl)?);
    }

    let w = poly.sample(Arc::new(DiskGrid::new(32, 64)?));
    let x = Vec3::new(0.3, -0.2, 1.0);
    let u = reconstruct(&w, x)?;
    println!("u({:?}) = {:?}, |u| = {:.6}", x.0, u.0, u.norm());

    let a = sign_arbitration(&w)?;
    println!(
        "vertical derivative: rotational error {:.3e}, reversed {:.3e}, winner {:?}",
        a.rotational_error,
        a.reversed_error,
        a.winner()
    );
    Ok(())
}
