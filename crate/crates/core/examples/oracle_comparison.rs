//! Slice solver against the brute-force 3D solver on matched grids.

use helical_flow::oracle3d::{compare_slice_vs_3d, CompareConfig};

fn main() -> helical_flow::Result<()> {
    println!(
        "{:>4} {:>10} {:>10} {:>10}",
        "n", "total", "interior", "shell"
    );
    for n in [8, 16, 32] {
        let cfg = CompareConfig {
            nr: n,
            ntheta: n,
            nz: n,
            ..CompareConfig::default()
        };
        let c = compare_slice_vs_3d(&cfg)?;
        println!(
            "{n:>4} {:>9.3}% {:>9.3}% {:>9.3}%",
            100.0 * c.relative_l2,
            100.0 * c.interior_relative_l2,
            100.0 * c.shell_relative_l2
        );
    }
    Ok(())
}
