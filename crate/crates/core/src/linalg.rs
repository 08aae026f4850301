//! Krylov solvers (PCG and restarted GMRES) in a weighted inner product.

use crate::error::{HelixError, Result};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CgStats {
    pub iterations: usize,
    pub residual: f64,
}

/// Solves `A x = b` for `A` symmetric positive (semi)definite with respect to
/// `inner`, starting from the guess in `x`. Iteration stops once
/// `‖b - A x‖ <= abs_tol`.
pub fn pcg<A, M, I>(
    apply: A,
    precond: M,
    inner: I,
    b: &[f64],
    x: &mut [f64],
    abs_tol: f64,
    max_iter: usize,
) -> Result<CgStats>
where
    A: Fn(&[f64]) -> Vec<f64>,
    M: Fn(&[f64]) -> Vec<f64>,
    I: Fn(&[f64], &[f64]) -> f64,
{
    let ax = apply(x);
    let mut r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
    let mut res = inner(&r, &r).max(0.0).sqrt();
    if res <= abs_tol {
        return Ok(CgStats {
            iterations: 0,
            residual: res,
        });
    }
    let mut z = precond(&r);
    let mut p = z.clone();
    let mut rz = inner(&r, &z);
    for it in 1..=max_iter {
        let ap = apply(&p);
        let pap = inner(&p, &ap);
        if pap <= 0.0 {
            return Err(HelixError::NotConverged {
                solver: "conjugate gradient (lost positivity)",
                iterations: it,
                residual: res,
            });
        }
        let alpha = rz / pap;
        for i in 0..x.len() {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = inner(&r, &r).max(0.0).sqrt();
        if res <= abs_tol {
            return Ok(CgStats {
                iterations: it,
                residual: res,
            });
        }
        z = precond(&r);
        let rz_new = inner(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..p.len() {
            p[i] = z[i] + beta * p[i];
        }
    }
    Err(HelixError::NotConverged {
        solver: "conjugate gradient",
        iterations: max_iter,
        residual: res,
    })
}

/// Restarted right-preconditioned GMRES for nonsymmetric systems. The
/// residual is measured in `inner`; iteration stops once it is `<= abs_tol`.
#[allow(clippy::too_many_arguments)]
pub fn gmres<A, M, I>(
    apply: A,
    precond: M,
    inner: I,
    b: &[f64],
    x: &mut [f64],
    abs_tol: f64,
    restart: usize,
    max_iter: usize,
) -> Result<CgStats>
where
    A: Fn(&[f64]) -> Vec<f64>,
    M: Fn(&[f64]) -> Vec<f64>,
    I: Fn(&[f64], &[f64]) -> f64,
{
    let n = b.len();
    let m = restart.max(1);
    let mut total = 0;
    let mut res;
    loop {
        let ax = apply(x);
        let r: Vec<f64> = b.iter().zip(&ax).map(|(b, a)| b - a).collect();
        let beta = inner(&r, &r).max(0.0).sqrt();
        res = beta;
        if beta <= abs_tol {
            return Ok(CgStats {
                iterations: total,
                residual: beta,
            });
        }
        if total >= max_iter {
            break;
        }
        let mut v: Vec<Vec<f64>> = vec![r.iter().map(|x| x / beta).collect()];
        let mut z: Vec<Vec<f64>> = Vec::with_capacity(m);
        let mut h = vec![vec![0.0; m]; m + 1];
        let (mut cs, mut sn) = (vec![0.0; m], vec![0.0; m]);
        let mut g = vec![0.0; m + 1];
        g[0] = beta;
        let mut k = 0;
        while k < m && total < max_iter {
            let zk = precond(&v[k]);
            let mut w = apply(&zk);
            z.push(zk);
            for (i, vi) in v.iter().enumerate() {
                let hij = inner(&w, vi);
                h[i][k] = hij;
                w.iter_mut().zip(vi).for_each(|(w, v)| *w -= hij * v);
            }
            let wn = inner(&w, &w).max(0.0).sqrt();
            h[k + 1][k] = wn;
            for i in 0..k {
                let t = cs[i] * h[i][k] + sn[i] * h[i + 1][k];
                h[i + 1][k] = -sn[i] * h[i][k] + cs[i] * h[i + 1][k];
                h[i][k] = t;
            }
            let d = h[k][k].hypot(h[k + 1][k]);
            let (c, s) = if d == 0.0 {
                (1.0, 0.0)
            } else {
                (h[k][k] / d, h[k + 1][k] / d)
            };
            cs[k] = c;
            sn[k] = s;
            h[k][k] = d;
            h[k + 1][k] = 0.0;
            g[k + 1] = -s * g[k];
            g[k] *= c;
            total += 1;
            k += 1;
            res = g[k].abs();
            if res <= abs_tol || wn == 0.0 {
                break;
            }
            v.push(w.iter().map(|x| x / wn).collect());
        }
        // back substitution on the k x k triangle
        let mut y = vec![0.0; k];
        for i in (0..k).rev() {
            let s: f64 = (i + 1..k).map(|j| h[i][j] * y[j]).sum();
            y[i] = (g[i] - s) / h[i][i];
        }
        for (yi, zi) in y.iter().zip(&z) {
            for j in 0..n {
                x[j] += yi * zi[j];
            }
        }
    }
    Err(HelixError::NotConverged {
        solver: "GMRES",
        iterations: total,
        residual: res,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system() {
        // tridiagonal [-1 2 -1] with unit weights
        let n = 20;
        let apply = |v: &[f64]| {
            (0..n)
                .map(|i| {
                    let l = if i > 0 { v[i - 1] } else { 0.0 };
                    let r = if i + 1 < n { v[i + 1] } else { 0.0 };
                    2.0 * v[i] - l - r
                })
                .collect::<Vec<_>>()
        };
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let b: Vec<f64> = (0..n).map(|i| (i as f64).sin()).collect();
        let mut x = vec![0.0; n];
        let stats = pcg(apply, |r: &[f64]| r.to_vec(), dot, &b, &mut x, 1e-12, 100).unwrap();
        assert!(stats.iterations <= n);
        let ax = apply(&x);
        assert!(ax.iter().zip(&b).all(|(a, b)| (a - b).abs() < 1e-10));
    }

    #[test]
    fn gmres_solves_nonsymmetric_system() {
        // convection-diffusion: [-1-a, 2, -1+a]
        let n = 40;
        let a = 0.6;
        let apply = |v: &[f64]| {
            (0..n)
                .map(|i| {
                    let l = if i > 0 { v[i - 1] } else { 0.0 };
                    let r = if i + 1 < n { v[i + 1] } else { 0.0 };
                    2.0 * v[i] - (1.0 + a) * l - (1.0 - a) * r
                })
                .collect::<Vec<_>>()
        };
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let b: Vec<f64> = (0..n).map(|i| 1.0 + (i as f64 * 0.3).cos()).collect();
        let mut x = vec![0.0; n];
        gmres(
            apply,
            |r: &[f64]| r.to_vec(),
            dot,
            &b,
            &mut x,
            1e-11,
            15,
            400,
        )
        .unwrap();
        let ax = apply(&x);
        assert!(ax.iter().zip(&b).all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn reports_non_convergence() {
        let apply = |v: &[f64]| {
            v.iter()
                .enumerate()
                .map(|(i, x)| (1.0 + i as f64) * x)
                .collect::<Vec<_>>()
        };
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let b = vec![1.0; 50];
        let mut x = vec![0.0; 50];
        let err = pcg(apply, |r: &[f64]| r.to_vec(), dot, &b, &mut x, 1e-14, 3).unwrap_err();
        assert!(matches!(
            err,
            HelixError::NotConverged { iterations: 3, .. }
        ));
    }
}
