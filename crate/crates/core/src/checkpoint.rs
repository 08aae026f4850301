//! Plain-text dump of a slice state.
//!
//! ```text
//! helical-flow checkpoint 1
//! nr 64
//! ntheta 64
//! t 0.5
//! nu 0.5
//! u1 u2 u3 p
//! <nr * ntheta lines, ring-major: node j * ntheta + k at r_j, θ_k>
//! ```
//!
//! Values are written in Rust's shortest round-trip form, so a dump read
//! back reproduces the state bit for bit.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::Arc;

use crate::error::{HelixError, Result};
use crate::grid::DiskGrid;
use crate::helix::SliceField;

const MAGIC: &str = "helical-flow checkpoint 1";
const COLUMNS: &str = "u1 u2 u3 p";

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub t: f64,
    pub nu: f64,
    pub field: SliceField,
}

pub fn write_checkpoint<W: Write>(out: W, field: &SliceField, t: f64, nu: f64) -> Result<()> {
    let mut out = BufWriter::new(out);
    let g = &field.grid;
    writeln!(out, "{MAGIC}")?;
    writeln!(out, "nr {}", g.nr())?;
    writeln!(out, "ntheta {}", g.ntheta())?;
    writeln!(out, "t {t:?}")?;
    writeln!(out, "nu {nu:?}")?;
    writeln!(out, "{COLUMNS}")?;
    for i in 0..field.len() {
        writeln!(
            out,
            "{:?} {:?} {:?} {:?}",
            field.u[0][i], field.u[1][i], field.u[2][i], field.p[i]
        )?;
    }
    out.flush()?;
    Ok(())
}

fn bad(line: usize, msg: impl std::fmt::Display) -> HelixError {
    HelixError::Checkpoint(format!("line {line}: {msg}"))
}

fn header_value<T: std::str::FromStr>(
    lines: &mut impl Iterator<Item = (usize, std::io::Result<String>)>,
    key: &str,
) -> Result<T> {
    let (n, line) = lines
        .next()
        .ok_or_else(|| bad(0, format!("missing `{key}`")))?;
    let line = line?;
    let mut parts = line.split_whitespace();
    if parts.next() != Some(key) {
        return Err(bad(n + 1, format!("expected `{key}`, found `{line}`")));
    }
    parts
        .next()
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| bad(n + 1, format!("malformed value for `{key}`")))
}

pub fn read_checkpoint<R: BufRead>(input: R) -> Result<Checkpoint> {
    let mut lines = input.lines().enumerate();
    let (_, first) = lines.next().ok_or_else(|| bad(1, "empty file"))?;
    if first?.trim() != MAGIC {
        return Err(bad(1, "not a helical-flow checkpoint"));
    }
    let nr: usize = header_value(&mut lines, "nr")?;
    let ntheta: usize = header_value(&mut lines, "ntheta")?;
    let t: f64 = header_value(&mut lines, "t")?;
    let nu: f64 = header_value(&mut lines, "nu")?;
    match lines.next() {
        Some((_, Ok(l))) if l.trim() == COLUMNS => {}
        _ => return Err(bad(6, format!("expected column header `{COLUMNS}`"))),
    }
    let grid = Arc::new(DiskGrid::new(nr, ntheta).map_err(|e| bad(2, e))?);
    let n = grid.len();
    let mut cols: [Vec<f64>; 4] = std::array::from_fn(|_| Vec::with_capacity(n));
    for (ln, line) in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|v| v.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| bad(ln + 1, e))?;
        if vals.len() != 4 {
            return Err(bad(
                ln + 1,
                format!("expected 4 values, found {}", vals.len()),
            ));
        }
        for (c, v) in cols.iter_mut().zip(vals) {
            c.push(v);
        }
    }
    if cols[0].len() != n {
        return Err(HelixError::Checkpoint(format!(
            "expected {n} node rows, found {}",
            cols[0].len()
        )));
    }
    let [u1, u2, u3, p] = cols;
    let field = SliceField::new(grid, [u1, u2, u3], p)?;
    Ok(Checkpoint { t, nu, field })
}

pub fn save(path: &Path, field: &SliceField, t: f64, nu: f64) -> Result<()> {
    write_checkpoint(File::create(path)?, field, t, nu)
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fields::random_dirichlet_field;

    #[test]
    fn round_trip_is_exact() {
        let g = Arc::new(DiskGrid::new(6, 8).unwrap());
        let mut w = random_dirichlet_field(g.clone(), 4);
        w.p = g.sample(|x, y| x * y - 0.1);
        let mut buf = Vec::new();
        write_checkpoint(&mut buf, &w, 0.125, 0.5).unwrap();
        let back = read_checkpoint(buf.as_slice()).unwrap();
        assert_eq!(back.t, 0.125);
        assert_eq!(back.nu, 0.5);
        assert_eq!(back.field.u, w.u);
        assert_eq!(back.field.p, w.p);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("state.txt");
        let w = random_dirichlet_field(Arc::new(DiskGrid::new(4, 8).unwrap()), 1);
        save(&path, &w, 1.0, 0.25).unwrap();
        assert_eq!(load(&path).unwrap().field.u, w.u);
    }

    #[test]
    fn malformed_dumps_are_rejected() {
        let bad_magic = "something else\n";
        assert!(matches!(
            read_checkpoint(bad_magic.as_bytes()),
            Err(HelixError::Checkpoint(_))
        ));
        let short = format!("{MAGIC}\nnr 4\nntheta 8\nt 0\nnu 1\n{COLUMNS}\n0 0 0 0\n");
        assert!(matches!(
            read_checkpoint(short.as_bytes()),
            Err(HelixError::Checkpoint(_))
        ));
        let garbage = format!("{MAGIC}\nnr 4\nntheta 8\nt 0\nnu 1\n{COLUMNS}\n0 x 0 0\n");
        let err = read_checkpoint(garbage.as_bytes()).unwrap_err();
        assert!(err.to_string().contains("line 7"), "{err}");
    }
}
