//! Dense bivariate polynomials in `(x, y)`, used to build analytic test and
//! initial fields whose derivatives are exact.

use std::ops::{Add, Mul, Neg, Sub};

#[derive(Clone, Debug, PartialEq)]
pub struct Poly2 {
    /// `coef[i][j]` multiplies `x^i y^j`.
    coef: Vec<Vec<f64>>,
}

impl Poly2 {
    pub fn zero() -> Self {
        Self {
            coef: vec![vec![0.0]],
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            coef: vec![vec![c]],
        }
    }

    pub fn monomial(c: f64, i: usize, j: usize) -> Self {
        let mut coef = vec![vec![0.0; j + 1]; i + 1];
        coef[i][j] = c;
        Self { coef }
    }

    pub fn x() -> Self {
        Self::monomial(1.0, 1, 0)
    }

    pub fn y() -> Self {
        Self::monomial(1.0, 0, 1)
    }

    /// `1 - x² - y²`.
    pub fn wall() -> Self {
        Self::constant(1.0) - Self::monomial(1.0, 2, 0) - Self::monomial(1.0, 0, 2)
    }

    fn dims(&self) -> (usize, usize) {
        (
            self.coef.len(),
            self.coef.iter().map(|r| r.len()).max().unwrap_or(1),
        )
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let mut s = 0.0;
        let mut xp = 1.0;
        for row in &self.coef {
            let mut inner = 0.0;
            for c in row.iter().rev() {
                inner = inner * y + c;
            }
            s += xp * inner;
            xp *= x;
        }
        s
    }

    pub fn dx(&self) -> Self {
        if self.coef.len() < 2 {
            return Self::zero();
        }
        let coef = self.coef[1..]
            .iter()
            .enumerate()
            .map(|(i, row)| row.iter().map(|c| c * (i + 1) as f64).collect())
            .collect();
        Self { coef }
    }

    pub fn dy(&self) -> Self {
        let coef: Vec<Vec<f64>> = self
            .coef
            .iter()
            .map(|row| {
                if row.len() < 2 {
                    vec![0.0]
                } else {
                    row[1..]
                        .iter()
                        .enumerate()
                        .map(|(j, c)| c * (j + 1) as f64)
                        .collect()
                }
            })
            .collect();
        Self { coef }
    }

    /// Angular derivative `x ∂y - y ∂x`.
    pub fn dtheta(&self) -> Self {
        Self::x() * self.dy() - Self::y() * self.dx()
    }

    pub fn laplacian(&self) -> Self {
        self.dx().dx() + self.dy().dy()
    }

    pub fn scale(&self, a: f64) -> Self {
        Self {
            coef: self
                .coef
                .iter()
                .map(|r| r.iter().map(|c| c * a).collect())
                .collect(),
        }
    }
}

impl Add for Poly2 {
    type Output = Poly2;
    fn add(self, o: Poly2) -> Poly2 {
        let (a0, a1) = self.dims();
        let (b0, b1) = o.dims();
        let mut coef = vec![vec![0.0; a1.max(b1)]; a0.max(b0)];
        for (i, row) in self.coef.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                coef[i][j] += c;
            }
        }
        for (i, row) in o.coef.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                coef[i][j] += c;
            }
        }
        Poly2 { coef }
    }
}

impl Neg for Poly2 {
    type Output = Poly2;
    fn neg(self) -> Poly2 {
        self.scale(-1.0)
    }
}

impl Sub for Poly2 {
    type Output = Poly2;
    fn sub(self, o: Poly2) -> Poly2 {
        self + (-o)
    }
}

impl Mul for Poly2 {
    type Output = Poly2;
    fn mul(self, o: Poly2) -> Poly2 {
        let (a0, a1) = self.dims();
        let (b0, b1) = o.dims();
        let mut coef = vec![vec![0.0; a1 + b1 - 1]; a0 + b0 - 1];
        for (i, row) in self.coef.iter().enumerate() {
            for (j, c) in row.iter().enumerate() {
                if *c == 0.0 {
                    continue;
                }
                for (k, orow) in o.coef.iter().enumerate() {
                    for (l, d) in orow.iter().enumerate() {
                        coef[i + k][j + l] += c * d;
                    }
                }
            }
        }
        Poly2 { coef }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn derivatives_match_finite_differences() {
        let p = Poly2::wall()
            * Poly2::wall()
            * (Poly2::constant(0.5) + Poly2::x() * Poly2::y().scale(3.0));
        let (x, y, h) = (0.3, -0.4, 1e-6);
        let fdx = (p.eval(x + h, y) - p.eval(x - h, y)) / (2.0 * h);
        let fdy = (p.eval(x, y + h) - p.eval(x, y - h)) / (2.0 * h);
        assert!((p.dx().eval(x, y) - fdx).abs() < 1e-8);
        assert!((p.dy().eval(x, y) - fdy).abs() < 1e-8);
        assert!((p.dtheta().eval(x, y) - (x * fdy - y * fdx)).abs() < 1e-8);
    }

    #[test]
    fn radial_polynomial_has_zero_angular_derivative() {
        let p = Poly2::wall() * Poly2::wall();
        assert!(p.dtheta().eval(0.2, 0.7).abs() < 1e-14);
    }
}
