//! Monomial bases in graded order.
//!
//! Exponent tuples are ordered by ascending total degree; within a degree the
//! tuples are ordered lexicographically descending, so the first variable's
//! exponent decreases first. For `d = 2`, degree 2 this yields
//! `x^2, x y, y^2`. Coefficient files depend on this order.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::HashMap;

pub const ORDERING_TAG: &str = "grlex-desc-first";

/// Serialized form of a [`MonomialBasis`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BasisDescriptor {
    pub d: usize,
    pub degree_min: u32,
    pub degree_max: u32,
    pub ordering: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BasisDescriptor", into = "BasisDescriptor")]
pub struct MonomialBasis {
    d: usize,
    degree_min: u32,
    degree_max: u32,
    exponents: Vec<Vec<u32>>,
}

impl From<MonomialBasis> for BasisDescriptor {
    fn from(b: MonomialBasis) -> Self {
        b.descriptor()
    }
}

impl TryFrom<BasisDescriptor> for MonomialBasis {
    type Error = String;

    fn try_from(desc: BasisDescriptor) -> Result<Self, Self::Error> {
        if desc.ordering != ORDERING_TAG {
            return Err(format!(
                "unsupported monomial ordering `{}` (expected `{ORDERING_TAG}`)",
                desc.ordering
            ));
        }
        if desc.d == 0 || desc.degree_min > desc.degree_max {
            return Err(format!(
                "invalid basis: d = {}, degrees {}..={}",
                desc.d, desc.degree_min, desc.degree_max
            ));
        }
        Ok(MonomialBasis::new(desc.d, desc.degree_min, desc.degree_max))
    }
}

/// All exponent tuples of `d` variables with total degree `m`, in table order.
pub fn homogeneous_exponents(d: usize, m: u32) -> Vec<Vec<u32>> {
    fn rec(d: usize, m: u32, prefix: &mut Vec<u32>, out: &mut Vec<Vec<u32>>) {
        if d == 1 {
            prefix.push(m);
            out.push(prefix.clone());
            prefix.pop();
            return;
        }
        for first in (0..=m).rev() {
            prefix.push(first);
            rec(d - 1, m - first, prefix, out);
            prefix.pop();
        }
    }
    let mut out = Vec::new();
    rec(d, m, &mut Vec::with_capacity(d), &mut out);
    out
}

/// Binomial coefficient, exact for the small arguments used here.
pub fn binomial(n: u64, k: u64) -> u64 {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    (0..k).fold(1u64, |acc, i| acc * (n - i) / (i + 1))
}

impl MonomialBasis {
    pub fn new(d: usize, degree_min: u32, degree_max: u32) -> Self {
        assert!(d >= 1, "monomial basis needs at least one variable");
        assert!(degree_min <= degree_max, "empty degree range");
        let exponents = (degree_min..=degree_max)
            .flat_map(|m| homogeneous_exponents(d, m))
            .collect();
        Self {
            d,
            degree_min,
            degree_max,
            exponents,
        }
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn degree_min(&self) -> u32 {
        self.degree_min
    }

    pub fn degree_max(&self) -> u32 {
        self.degree_max
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    pub fn exponents(&self) -> &[Vec<u32>] {
        &self.exponents
    }

    pub fn descriptor(&self) -> BasisDescriptor {
        BasisDescriptor {
            d: self.d,
            degree_min: self.degree_min,
            degree_max: self.degree_max,
            ordering: ORDERING_TAG.to_string(),
        }
    }

    /// Expected table length, `sum_m C(m + d - 1, d - 1)`.
    pub fn expected_len(d: usize, degree_min: u32, degree_max: u32) -> usize {
        (degree_min..=degree_max)
            .map(|m| binomial(m as u64 + d as u64 - 1, d as u64 - 1) as usize)
            .sum()
    }

    pub fn index_map(&self) -> HashMap<Vec<u32>, usize> {
        self.exponents
            .iter()
            .enumerate()
            .map(|(i, e)| (e.clone(), i))
            .collect()
    }

    fn powers(&self, q: &[f64]) -> Vec<Vec<f64>> {
        let top = self.degree_max as usize;
        q.iter()
            .map(|&x| {
                let mut p = Vec::with_capacity(top + 1);
                let mut acc = 1.0;
                for _ in 0..=top {
                    p.push(acc);
                    acc *= x;
                }
                p
            })
            .collect()
    }

    /// Evaluates every monomial at `q`, in table order.
    pub fn eval(&self, q: &[f64]) -> DVector<f64> {
        assert_eq!(q.len(), self.d, "monomial argument has wrong dimension");
        let pw = self.powers(q);
        DVector::from_iterator(
            self.len(),
            self.exponents.iter().map(|e| {
                e.iter()
                    .zip(&pw)
                    .map(|(&k, p)| p[k as usize])
                    .product::<f64>()
            }),
        )
    }

    /// Derivatives of every monomial: row `i` is the gradient of monomial `i`.
    pub fn jacobian(&self, q: &[f64]) -> DMatrix<f64> {
        assert_eq!(q.len(), self.d, "monomial argument has wrong dimension");
        let pw = self.powers(q);
        let mut jac = DMatrix::zeros(self.len(), self.d);
        for (row, e) in self.exponents.iter().enumerate() {
            for var in 0..self.d {
                if e[var] == 0 {
                    continue;
                }
                let mut v = e[var] as f64 * pw[var][e[var] as usize - 1];
                for (other, &k) in e.iter().enumerate() {
                    if other != var {
                        v *= pw[other][k as usize];
                    }
                }
                jac[(row, var)] = v;
            }
        }
        jac
    }

    /// Stacks `eval` for many points as columns of an `m x n` matrix.
    pub fn eval_many<'a, I>(&self, points: I) -> DMatrix<f64>
    where
        I: IntoIterator<Item = &'a DVector<f64>>,
    {
        let cols: Vec<DVector<f64>> = points
            .into_iter()
            .map(|q| self.eval(q.as_slice()))
            .collect();
        if cols.is_empty() {
            return DMatrix::zeros(self.len(), 0);
        }
        DMatrix::from_columns(&cols)
    }
}
