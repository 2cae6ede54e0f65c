use super::VectorField;
use crate::error::{Error, Result};
use crate::linalg::random_orthogonal;
use crate::tps::Tps;
use nalgebra::{DMatrix, DVector};

/// A low-dimensional field placed in a larger space behind a rotation.
///
/// With `z = Q^T x`, the first `k` coordinates of `z` follow the inner field
/// and the remaining ones decay linearly at the given negative rates:
/// `x' = Q (g(z_1..k, u), rates * z_{k+1..N})`.
#[derive(Clone, Debug)]
pub struct Embedded<F> {
    inner: F,
    rates: DVector<f64>,
    q: DMatrix<f64>,
}

impl<F: VectorField> Embedded<F> {
    pub fn new(inner: F, rates: DVector<f64>, q: DMatrix<f64>) -> Result<Self> {
        let n = inner.dim() + rates.len();
        if q.nrows() != n || q.ncols() != n {
            return Err(Error::dims("embedding rotation", n, q.nrows()));
        }
        let err = (q.transpose() * &q - DMatrix::<f64>::identity(n, n)).amax();
        if err > 1e-10 {
            return Err(Error::Validation(format!(
                "embedding matrix is not orthogonal (error {err:e})"
            )));
        }
        Ok(Self { inner, rates, q })
    }

    /// Random rotation drawn from `seed`.
    pub fn random(inner: F, rates: DVector<f64>, seed: u64) -> Self {
        let n = inner.dim() + rates.len();
        let q = random_orthogonal(n, seed);
        Self { inner, rates, q }
    }

    /// Identity embedding, convenient for tests.
    pub fn aligned(inner: F, rates: DVector<f64>) -> Self {
        let n = inner.dim() + rates.len();
        Self {
            inner,
            rates,
            q: DMatrix::identity(n, n),
        }
    }

    pub fn inner(&self) -> &F {
        &self.inner
    }

    pub fn rotation(&self) -> &DMatrix<f64> {
        &self.q
    }

    pub fn rates(&self) -> &DVector<f64> {
        &self.rates
    }

    /// Maps inner coordinates (fast ones zero) to the embedding space.
    pub fn embed_point(&self, z: &DVector<f64>) -> DVector<f64> {
        let k = self.inner.dim();
        self.q.columns(0, k) * z
    }

    /// Inner coordinates of a point in the embedding space.
    pub fn inner_coords(&self, x: &DVector<f64>) -> DVector<f64> {
        let k = self.inner.dim();
        self.q.columns(0, k).transpose() * x
    }

    /// Column `i` of the rotation, the image of inner coordinate axis `i`.
    pub fn axis(&self, i: usize) -> DVector<f64> {
        self.q.column(i).into_owned()
    }
}

impl<F: VectorField> VectorField for Embedded<F> {
    fn dim(&self) -> usize {
        self.q.nrows()
    }

    fn n_inputs(&self) -> usize {
        self.inner.n_inputs()
    }

    fn eval(&self, x: &DVector<f64>, u: &DVector<f64>) -> DVector<f64> {
        let k = self.inner.dim();
        let z = self.q.transpose() * x;
        let zi = z.rows(0, k).into_owned();
        let gi = self.inner.eval(&zi, u);
        let mut dz = DVector::zeros(z.len());
        dz.rows_mut(0, k).copy_from(&gi);
        for (j, r) in self.rates.iter().enumerate() {
            dz[k + j] = r * z[k + j];
        }
        &self.q * dz
    }

    fn eval_jacobian(&self, x: &DVector<f64>, u: &DVector<f64>) -> DMatrix<f64> {
        let k = self.inner.dim();
        let n = self.dim();
        let z = self.q.transpose() * x;
        let zi = z.rows(0, k).into_owned();
        let mut jz = DMatrix::zeros(n, n);
        jz.view_mut((0, 0), (k, k))
            .copy_from(&self.inner.eval_jacobian(&zi, u));
        for (j, r) in self.rates.iter().enumerate() {
            jz[(k + j, k + j)] = *r;
        }
        &self.q * jz * self.q.transpose()
    }

    fn forcing_gain(&self) -> f64 {
        self.inner.forcing_gain()
    }

    fn taylor(&self, x: &[Tps], u: &DVector<f64>) -> Option<Vec<Tps>> {
        let k = self.inner.dim();
        let n = self.dim();
        let space = x.first()?.space().clone();
        let z: Vec<Tps> = (0..n)
            .map(|i| {
                let mut t = Tps::zero(&space);
                for (j, xj) in x.iter().enumerate() {
                    let c = self.q[(j, i)];
                    if c != 0.0 {
                        t.axpy(c, xj);
                    }
                }
                t
            })
            .collect();
        let mut dz = self.inner.taylor(&z[..k], u)?;
        for (j, r) in self.rates.iter().enumerate() {
            dz.push(z[k + j].scale(*r));
        }
        Some(
            (0..n)
                .map(|i| {
                    let mut t = Tps::zero(&space);
                    for (j, dzj) in dz.iter().enumerate() {
                        let c = self.q[(i, j)];
                        if c != 0.0 {
                            t.axpy(c, dzj);
                        }
                    }
                    t
                })
                .collect(),
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{fd_jacobian, PolynomialSystem};

    fn inner() -> PolynomialSystem {
        PolynomialSystem::builder(2, 0)
            .term(0, -1.0, &[1, 0])
            .term(1, -10.0, &[0, 1])
            .term(1, 1.0, &[2, 0])
            .build()
            .unwrap()
    }

    #[test]
    fn rotation_commutes_with_the_field() {
        let rates = DVector::from_vec(vec![-20.0, -30.0, -25.0]);
        let sys = Embedded::random(inner(), rates, 4);
        let z = DVector::from_vec(vec![0.4, -0.2]);
        let x = sys.embed_point(&z);
        let f = sys.eval(&x, &DVector::zeros(0));
        let expected = sys.embed_point(&inner().eval(&z, &DVector::zeros(0)));
        assert!((f - expected).amax() < 1e-14);
        assert!((sys.inner_coords(&x) - z).amax() < 1e-14);
    }

    #[test]
    fn jacobian_and_series_agree_with_differences() {
        let rates = DVector::from_vec(vec![-20.0, -30.0]);
        let sys = Embedded::random(inner(), rates, 9);
        let x = DVector::from_vec(vec![0.1, -0.3, 0.2, 0.05]);
        let u = DVector::zeros(0);
        let j = sys.eval_jacobian(&x, &u);
        assert!((&j - fd_jacobian(&sys, &x, &u)).amax() < 1e-7);
        let a = sys.axis(0);
        let d2 = sys.second_derivative(&x, &u, &a, &a).unwrap();
        assert!((d2 - sys.axis(1) * 2.0).amax() < 1e-12);
    }
}
