//! Sweep random no-slip slices for the Ladyzhenskaya ratio and the
//! gradient-equivalence constant.

use std::sync::Arc;

use helical_flow::estimates::{ladyzhenskaya_ratio, measure_constants, LadyVariant};
use helical_flow::fields::random_dirichlet_field;
use helical_flow::DiskGrid;

fn main() -> helical_flow::Result<()> {
    let grid = Arc::new(DiskGrid::new(48, 48)?);
    let k = measure_constants(grid.clone(), 1, 100)?;
    println!("c0 = {:.6}", k.c0);
    println!(
        "c* = {:.4} (disk numerator), {:.4} (cylinder numerator)",
        k.c_star, k.c_star_cylinder
    );
    println!(
        "max interior Ladyzhenskaya ratio {:.4}, Dirichlet variant {:.4}",
        k.lady_c, k.lady_dirichlet
    );

    let mut ratios: Vec<f64> = (0..100)
        .map(|s| {
            ladyzhenskaya_ratio(
                &random_dirichlet_field(grid.clone(), s),
                LadyVariant::Interior,
            )
        })
        .collect::<Result<_, _>>()?;
    ratios.sort_by(f64::total_cmp);
    println!(
        "interior ratio quartiles: {:.3} {:.3} {:.3}",
        ratios[25], ratios[50], ratios[75]
    );
    Ok(())
}
