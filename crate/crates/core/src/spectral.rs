//! Fourier differentiation along the periodic angular direction.
//!
//! Fields are stored ring-major (`j * ntheta + k`), so one FFT call over a
//! buffer of `nr * ntheta` points transforms every ring at once.

use std::fmt;
use std::sync::Arc;

use num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

#[derive(Clone)]
pub struct AngularFft {
    n: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl fmt::Debug for AngularFft {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AngularFft").field("n", &self.n).finish()
    }
}

impl AngularFft {
    pub fn new(n: usize) -> Self {
        let mut planner = FftPlanner::new();
        Self {
            n,
            forward: planner.plan_fft_forward(n),
            inverse: planner.plan_fft_inverse(n),
        }
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    /// Signed wavenumber of FFT bin `k`; the Nyquist bin reports `+n/2`.
    pub fn wavenumber(&self, k: usize) -> f64 {
        if k <= self.n / 2 {
            k as f64
        } else {
            k as f64 - self.n as f64
        }
    }

    /// Symbol of the first derivative. The Nyquist bin is zeroed so the
    /// discrete operator stays real and skew-symmetric.
    pub fn first_symbol(&self, k: usize) -> f64 {
        if 2 * k == self.n {
            0.0
        } else {
            self.wavenumber(k)
        }
    }

    /// `-(symbol of d²/dθ²)`, nonnegative.
    pub fn second_symbol(&self, k: usize) -> f64 {
        let m = self.wavenumber(k);
        m * m
    }

    /// Unnormalised forward transform of every ring.
    pub fn forward(&self, f: &[f64]) -> Vec<Complex64> {
        debug_assert_eq!(f.len() % self.n, 0);
        let mut buf: Vec<Complex64> = f.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        self.forward.process(&mut buf);
        buf
    }

    /// Inverse transform (normalised), keeping the real part.
    pub fn inverse(&self, mut spec: Vec<Complex64>) -> Vec<f64> {
        self.inverse.process(&mut spec);
        let scale = 1.0 / self.n as f64;
        spec.into_iter().map(|c| c.re * scale).collect()
    }

    /// `∂θ f` for every ring.
    pub fn derivative(&self, f: &[f64]) -> Vec<f64> {
        let mut spec = self.forward(f);
        for ring in spec.chunks_mut(self.n) {
            for (k, c) in ring.iter_mut().enumerate() {
                let m = self.first_symbol(k);
                *c = Complex64::new(-m * c.im, m * c.re);
            }
        }
        self.inverse(spec)
    }

    /// `∂²θ f` for every ring.
    pub fn second_derivative(&self, f: &[f64]) -> Vec<f64> {
        let mut spec = self.forward(f);
        for ring in spec.chunks_mut(self.n) {
            for (k, c) in ring.iter_mut().enumerate() {
                *c *= -self.second_symbol(k);
            }
        }
        self.inverse(spec)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    #[test]
    fn derivative_of_trig_is_exact() {
        let n = 16;
        let fft = AngularFft::new(n);
        let th: Vec<f64> = (0..n).map(|k| 2.0 * PI * k as f64 / n as f64).collect();
        let f: Vec<f64> = th.iter().map(|t| (3.0 * t).sin() + 0.5 * t.cos()).collect();
        let d = fft.derivative(&f);
        let dd = fft.second_derivative(&f);
        for k in 0..n {
            let t = th[k];
            assert!((d[k] - (3.0 * (3.0 * t).cos() - 0.5 * t.sin())).abs() < 1e-12);
            assert!((dd[k] - (-9.0 * (3.0 * t).sin() - 0.5 * t.cos())).abs() < 1e-12);
        }
    }

    #[test]
    fn first_derivative_is_skew() {
        let n = 8;
        let fft = AngularFft::new(n);
        let f: Vec<f64> = (0..n).map(|k| ((k * 7 + 3) % 5) as f64 - 2.0).collect();
        let g: Vec<f64> = (0..n).map(|k| ((k * 3 + 1) % 4) as f64).collect();
        let df = fft.derivative(&f);
        let dg = fft.derivative(&g);
        let a: f64 = g.iter().zip(&df).map(|(x, y)| x * y).sum();
        let b: f64 = f.iter().zip(&dg).map(|(x, y)| x * y).sum();
        assert!((a + b).abs() < 1e-12);
    }
}
