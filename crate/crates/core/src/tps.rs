//! Truncated multivariate power series.
//!
//! A [`Tps`] holds the Taylor coefficients of a scalar function of `nvars`
//! variables up to a fixed total degree, indexed by the graded monomial table
//! of [`MonomialBasis`]. Products drop every term above the truncation degree.
//! These drive the equation-driven invariance recursion and the derivative
//! contractions of generic vector fields.

use crate::monomials::MonomialBasis;
use std::collections::HashMap;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::Arc;

#[derive(Debug)]
pub struct TpsSpace {
    nvars: usize,
    degree: u32,
    basis: MonomialBasis,
    degrees: Vec<u32>,
    lookup: HashMap<Vec<u32>, usize>,
    mul_table: Vec<(usize, usize, usize)>,
}

impl TpsSpace {
    pub fn new(nvars: usize, degree: u32) -> Arc<Self> {
        let basis = MonomialBasis::new(nvars, 0, degree);
        let lookup = basis.index_map();
        let degrees: Vec<u32> = basis.exponents().iter().map(|e| e.iter().sum()).collect();
        let mut mul_table = Vec::new();
        for (i, ei) in basis.exponents().iter().enumerate() {
            for (j, ej) in basis.exponents().iter().enumerate() {
                if degrees[i] + degrees[j] > degree {
                    continue;
                }
                let sum: Vec<u32> = ei.iter().zip(ej).map(|(a, b)| a + b).collect();
                mul_table.push((i, j, lookup[&sum]));
            }
        }
        Arc::new(Self {
            nvars,
            degree,
            basis,
            degrees,
            lookup,
            mul_table,
        })
    }

    pub fn nvars(&self) -> usize {
        self.nvars
    }

    pub fn degree(&self) -> u32 {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.basis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.basis.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        self.basis.exponents()
    }

    pub fn degree_of(&self, idx: usize) -> u32 {
        self.degrees[idx]
    }

    pub fn index_of(&self, exponent: &[u32]) -> Option<usize> {
        self.lookup.get(exponent).copied()
    }
}

#[derive(Clone, Debug)]
pub struct Tps {
    space: Arc<TpsSpace>,
    coeffs: Vec<f64>,
}

impl Tps {
    pub fn zero(space: &Arc<TpsSpace>) -> Self {
        Self {
            space: Arc::clone(space),
            coeffs: vec![0.0; space.len()],
        }
    }

    pub fn constant(space: &Arc<TpsSpace>, value: f64) -> Self {
        let mut t = Self::zero(space);
        t.coeffs[0] = value;
        t
    }

    /// The series of `value + x_var`.
    pub fn variable(space: &Arc<TpsSpace>, var: usize, value: f64) -> Self {
        assert!(var < space.nvars, "variable index out of range");
        let mut t = Self::constant(space, value);
        if space.degree >= 1 {
            let mut e = vec![0u32; space.nvars];
            e[var] = 1;
            t.coeffs[space.lookup[&e]] = 1.0;
        }
        t
    }

    pub fn from_coeffs(space: &Arc<TpsSpace>, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), space.len());
        Self {
            space: Arc::clone(space),
            coeffs,
        }
    }

    pub fn space(&self) -> &Arc<TpsSpace> {
        &self.space
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [f64] {
        &mut self.coeffs
    }

    pub fn value(&self) -> f64 {
        self.coeffs[0]
    }

    pub fn coeff(&self, exponent: &[u32]) -> f64 {
        self.space
            .index_of(exponent)
            .map(|i| self.coeffs[i])
            .unwrap_or(0.0)
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            space: Arc::clone(&self.space),
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// `self += s * other`.
    pub fn axpy(&mut self, s: f64, other: &Tps) {
        debug_assert!(Arc::ptr_eq(&self.space, &other.space));
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += s * b;
        }
    }

    pub fn add_constant(&mut self, c: f64) {
        self.coeffs[0] += c;
    }

    /// Keeps only the terms of total degree `m`.
    pub fn homogeneous(&self, m: u32) -> Self {
        let mut out = Self::zero(&self.space);
        for (i, c) in self.coeffs.iter().enumerate() {
            if self.space.degrees[i] == m {
                out.coeffs[i] = *c;
            }
        }
        out
    }

    /// Drops every term above total degree `m`.
    pub fn truncated(&self, m: u32) -> Self {
        let mut out = self.clone();
        for (i, c) in out.coeffs.iter_mut().enumerate() {
            if self.space.degrees[i] > m {
                *c = 0.0;
            }
        }
        out
    }

    /// Partial derivative with respect to variable `var` (the top degree is lost).
    pub fn derivative(&self, var: usize) -> Self {
        let mut out = Self::zero(&self.space);
        for (i, e) in self.space.exponents().iter().enumerate() {
            if e[var] == 0 || self.coeffs[i] == 0.0 {
                continue;
            }
            let mut lower = e.clone();
            lower[var] -= 1;
            let j = self.space.lookup[&lower];
            out.coeffs[j] += e[var] as f64 * self.coeffs[i];
        }
        out
    }

    /// Evaluates `sum_n series[n] * (self - self(0))^n`, i.e. the composition
    /// of a univariate function, given by its Taylor coefficients at `self(0)`,
    /// with this series.
    pub fn compose(&self, series: &[f64]) -> Self {
        let mut p = self.clone();
        p.coeffs[0] = 0.0;
        let mut out = Self::constant(&self.space, series.first().copied().unwrap_or(0.0));
        let mut power = Self::constant(&self.space, 1.0);
        for a in series.iter().skip(1).take(self.space.degree as usize) {
            power = &power * &p;
            out.axpy(*a, &power);
        }
        out
    }

    /// Point evaluation of the truncated polynomial.
    pub fn eval(&self, q: &[f64]) -> f64 {
        self.space
            .exponents()
            .iter()
            .zip(&self.coeffs)
            .filter(|(_, c)| **c != 0.0)
            .map(|(e, c)| {
                c * e
                    .iter()
                    .zip(q)
                    .map(|(&k, &x)| x.powi(k as i32))
                    .product::<f64>()
            })
            .sum()
    }

    pub fn tanh(&self) -> Self {
        self.compose(&tanh_series(self.value(), self.space.degree as usize))
    }
}

/// Taylor coefficients of `tanh(c + s)` in `s` up to order `n`, from
/// `t' = 1 - t^2`.
pub fn tanh_series(c: f64, n: usize) -> Vec<f64> {
    let mut t = vec![0.0; n + 1];
    t[0] = c.tanh();
    for k in 0..n {
        let conv: f64 = (0..=k).map(|i| t[i] * t[k - i]).sum();
        let rhs = if k == 0 { 1.0 - conv } else { -conv };
        t[k + 1] = rhs / (k as f64 + 1.0);
    }
    t
}

impl<'a> Add<&'a Tps> for &'a Tps {
    type Output = Tps;
    fn add(self, rhs: &'a Tps) -> Tps {
        let mut out = self.clone();
        out.axpy(1.0, rhs);
        out
    }
}

impl<'a> Sub<&'a Tps> for &'a Tps {
    type Output = Tps;
    fn sub(self, rhs: &'a Tps) -> Tps {
        let mut out = self.clone();
        out.axpy(-1.0, rhs);
        out
    }
}

impl<'a> Mul<&'a Tps> for &'a Tps {
    type Output = Tps;
    fn mul(self, rhs: &'a Tps) -> Tps {
        debug_assert!(Arc::ptr_eq(&self.space, &rhs.space));
        let mut out = Tps::zero(&self.space);
        for &(i, j, k) in &self.space.mul_table {
            let a = self.coeffs[i];
            if a == 0.0 {
                continue;
            }
            out.coeffs[k] += a * rhs.coeffs[j];
        }
        out
    }
}

impl Neg for &Tps {
    type Output = Tps;
    fn neg(self) -> Tps {
        self.scale(-1.0)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn product_truncates() {
        let sp = TpsSpace::new(1, 3);
        let x = Tps::variable(&sp, 0, 0.0);
        let x2 = &x * &x;
        let x4 = &x2 * &x2;
        assert_eq!(x2.coeffs(), &[0.0, 0.0, 1.0, 0.0]);
        assert!(x4.coeffs().iter().all(|&c| c == 0.0));
    }

    #[test]
    fn tanh_series_matches_known_expansion() {
        // tanh s = s - s^3/3 + 2 s^5/15
        let t = tanh_series(0.0, 5);
        let expected = [0.0, 1.0, 0.0, -1.0 / 3.0, 0.0, 2.0 / 15.0];
        for (a, b) in t.iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn tanh_series_derivatives_at_offset() {
        let c: f64 = 0.7;
        let t = tanh_series(c, 3);
        let sech2 = 1.0 / c.cosh().powi(2);
        assert!((t[1] - sech2).abs() < 1e-14);
        assert!((t[2] - (-2.0 * c.sinh() / c.cosh().powi(3)) / 2.0).abs() < 1e-14);
        let third = (4.0 * c.sinh().powi(2) - 2.0) / c.cosh().powi(4);
        assert!((t[3] - third / 6.0).abs() < 1e-14);
    }

    #[test]
    fn composed_tanh_agrees_with_direct_evaluation() {
        let sp = TpsSpace::new(2, 8);
        let x = Tps::variable(&sp, 0, 0.3);
        let y = Tps::variable(&sp, 1, 0.0);
        let arg = &x + &y.scale(0.5);
        let t = arg.tanh();
        let q = [0.01f64, -0.02];
        let direct = (0.3 + q[0] + 0.5 * q[1]).tanh();
        assert!((t.eval(&q) - direct).abs() < 1e-14);
    }

    #[test]
    fn derivative_of_monomial() {
        let sp = TpsSpace::new(2, 4);
        let x = Tps::variable(&sp, 0, 0.0);
        let y = Tps::variable(&sp, 1, 0.0);
        let p = &(&x * &x) * &y;
        let dp = p.derivative(0);
        assert_eq!(dp.coeff(&[1, 1]), 2.0);
        assert_eq!(p.derivative(1).coeff(&[2, 0]), 1.0);
    }
}
