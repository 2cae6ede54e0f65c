use super::VectorField;
use crate::error::{Error, Result};
use crate::tps::Tps;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// `coeff * prod_k v_k^exponents[k]` added to component `component`, where
/// `v = (x, u)` stacks state and input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PolyTerm {
    pub component: usize,
    pub coeff: f64,
    pub exponents: Vec<u32>,
}

/// Polynomial vector field in the state and the input jointly.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawPolynomialSystem")]
pub struct PolynomialSystem {
    dim: usize,
    n_inputs: usize,
    terms: Vec<PolyTerm>,
}

#[derive(Deserialize)]
struct RawPolynomialSystem {
    dim: usize,
    n_inputs: usize,
    terms: Vec<PolyTerm>,
}

impl TryFrom<RawPolynomialSystem> for PolynomialSystem {
    type Error = Error;
    fn try_from(raw: RawPolynomialSystem) -> Result<Self> {
        Self::new(raw.dim, raw.n_inputs, raw.terms)
    }
}

impl PolynomialSystem {
    pub fn new(dim: usize, n_inputs: usize, terms: Vec<PolyTerm>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Validation("polynomial system needs dim >= 1".into()));
        }
        for t in &terms {
            if t.component >= dim || t.exponents.len() != dim + n_inputs {
                return Err(Error::Validation(format!(
                    "bad polynomial term {t:?} for dim {dim}, {n_inputs} inputs"
                )));
            }
            if !t.coeff.is_finite() {
                return Err(Error::Validation("non-finite polynomial coefficient".into()));
            }
        }
        Ok(Self {
            dim,
            n_inputs,
            terms,
        })
    }

    /// Builder form: `term(i, c, &[...])` with exponents over `(x, u)`.
    pub fn builder(dim: usize, n_inputs: usize) -> PolyBuilder {
        PolyBuilder {
            dim,
            n_inputs,
            terms: Vec::new(),
        }
    }

    pub fn terms(&self) -> &[PolyTerm] {
        &self.terms
    }

    fn stacked(&self, x: &DVector<f64>, u: &DVector<f64>) -> Vec<f64> {
        x.iter().chain(u.iter()).copied().collect()
    }
}

pub struct PolyBuilder {
    dim: usize,
    n_inputs: usize,
    terms: Vec<PolyTerm>,
}

impl PolyBuilder {
    pub fn term(mut self, component: usize, coeff: f64, exponents: &[u32]) -> Self {
        self.terms.push(PolyTerm {
            component,
            coeff,
            exponents: exponents.to_vec(),
        });
        self
    }

    pub fn build(self) -> Result<PolynomialSystem> {
        PolynomialSystem::new(self.dim, self.n_inputs, self.terms)
    }
}

fn monomial(v: &[f64], e: &[u32]) -> f64 {
    v.iter()
        .zip(e)
        .filter(|(_, &k)| k > 0)
        .map(|(x, &k)| x.powi(k as i32))
        .product()
}

impl VectorField for PolynomialSystem {
    fn dim(&self) -> usize {
        self.dim
    }

    fn n_inputs(&self) -> usize {
        self.n_inputs
    }

    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let v = self.stacked(x, u);
        let mut out = DVector::zeros(self.dim);
        for t in &self.terms {
            out[t.component] += t.coeff * monomial(&v, &t.exponents);
        }
        out
    }

    fn eval_jacobian(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        let v = self.stacked(x, u);
        let mut jac = DMatrix::zeros(self.dim, self.dim);
        for t in &self.terms {
            for j in 0..self.dim {
                let k = t.exponents[j];
                if k == 0 {
                    continue;
                }
                let mut e = t.exponents.clone();
                e[j] -= 1;
                jac[(t.component, j)] += t.coeff * k as f64 * monomial(&v, &e);
            }
        }
        jac
    }

    fn taylor(&self, x: &[Tps], u: &DVector<f64>) -> Option<Vec<Tps>> {
        let space = x.first()?.space().clone();
        let mut out = vec![Tps::zero(&space); self.dim];
        for t in &self.terms {
            let mut prod = Tps::constant(&space, t.coeff);
            for (j, &k) in t.exponents.iter().enumerate() {
                for _ in 0..k {
                    if j < self.dim {
                        prod = &prod * &x[j];
                    } else {
                        prod = prod.scale(u[j - self.dim]);
                    }
                }
            }
            out[t.component].axpy(1.0, &prod);
        }
        Some(out)
    }
}
