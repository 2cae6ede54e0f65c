//! Dense linear-algebra helpers on top of nalgebra (and faer for the
//! non-symmetric eigenproblem).

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// Eigenvalues and (unit-norm) complex eigenvectors of a real square matrix.
pub fn eigen(a: &DMatrix<f64>) -> Result<(Vec<Complex64>, Vec<DVector<Complex64>>)> {
    let n = a.nrows();
    if n != a.ncols() {
        return Err(Error::dims("eigen input (square)", n, a.ncols()));
    }
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Eigen("matrix has non-finite entries".into()));
    }
    let m = faer::Mat::<f64>::from_fn(n, n, |i, j| a[(i, j)]);
    let e = m.eigen().map_err(|err| {
        Error::Eigen(format!(
            "{err:?}; |A|_max = {:e}, n = {n}",
            a.amax()
        ))
    })?;
    let s = e.S().column_vector();
    let u = e.U();
    let values: Vec<Complex64> = (0..n).map(|i| Complex64::new(s[i].re, s[i].im)).collect();
    let vectors = (0..n)
        .map(|j| {
            let v = DVector::from_iterator(n, (0..n).map(|i| {
                let z = u[(i, j)];
                Complex64::new(z.re, z.im)
            }));
            let norm = v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            if norm > 0.0 {
                v / Complex64::new(norm, 0.0)
            } else {
                v
            }
        })
        .collect();
    Ok((values, vectors))
}

/// Orthonormal basis of the column space (thin QR, columns kept in order).
pub fn orthonormalize(m: &DMatrix<f64>) -> DMatrix<f64> {
    let k = m.ncols();
    let q = m.clone().qr().q();
    q.columns(0, k).into_owned()
}

/// Haar-like random orthogonal matrix from a seed.
pub fn random_orthogonal(n: usize, seed: u64) -> DMatrix<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = DMatrix::from_fn(n, n, |_, _| StandardNormal.sample(&mut rng));
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// Solution of a ridge-regularized regression.
#[derive(Clone, Debug)]
pub struct RidgeFit {
    /// `p x m` coefficients `C` minimizing `mean_t |y_t - C phi_t|^2 + rho |C|^2`.
    pub coeffs: DMatrix<f64>,
    pub rho: f64,
    pub singular_values: DVector<f64>,
    pub rank: usize,
}

/// Ridge least squares for `targets ~ C * features`, with samples as columns.
///
/// `rho = rho_scale * mean_t |phi_t|^2`. The solve goes through a thin QR of
/// the feature matrix followed by an SVD of its triangular factor.
pub fn ridge_regression(
    features: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    rho_scale: f64,
) -> Result<RidgeFit> {
    let m = features.nrows();
    let n = features.ncols();
    if targets.ncols() != n {
        return Err(Error::dims("regression samples", n, targets.ncols()));
    }
    if n < m {
        return Err(Error::IllPosed(format!(
            "{n} samples for {m} unknowns per component; use more trajectories or a lower order"
        )));
    }
    if features.iter().chain(targets.iter()).any(|v| !v.is_finite()) {
        return Err(Error::IllPosed("non-finite regression data".into()));
    }
    let mean_sq = features.norm_squared() / n as f64;
    let rho = rho_scale * mean_sq;
    let qr = features.transpose().qr();
    let q = qr.q();
    let r = qr.r();
    let svd = r.svd(true, true);
    let s = svd.singular_values.clone();
    let smax = s.max();
    let rank = s.iter().filter(|&&v| v > smax * 1e-13).count();
    if smax == 0.0 || rank < m {
        return Err(Error::IllPosed(format!(
            "feature matrix has effective rank {rank} < {m}; use more trajectories or a lower order"
        )));
    }
    let u = svd.u.expect("u requested");
    let vt = svd.v_t.expect("v_t requested");
    let lambda = n as f64 * rho;
    let filt = DVector::from_iterator(m, s.iter().map(|&v| v / (v * v + lambda)));
    // features^T = Q U S V^T, so C = Y Q U diag(s / (s^2 + lambda)) V^T
    let yq = targets * q;
    let mut yqu = yq * u;
    for (j, f) in filt.iter().enumerate() {
        yqu.column_mut(j).scale_mut(*f);
    }
    Ok(RidgeFit {
        coeffs: yqu * vt,
        rho,
        singular_values: s,
        rank,
    })
}

/// `(e^{hA}, h phi_1(hA), h phi_2(hA))` from one exponential of an augmented
/// block matrix.
pub fn exp_phi(a: &DMatrix<f64>, h: f64) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let mut big = DMatrix::zeros(3 * n, 3 * n);
    big.view_mut((0, 0), (n, n)).copy_from(&(a * h));
    for i in 0..n {
        big[(i, n + i)] = h;
        big[(n + i, 2 * n + i)] = 1.0;
    }
    let e = big.exp();
    let e0 = e.view((0, 0), (n, n)).into_owned();
    let p1 = e.view((0, n), (n, n)).into_owned();
    let p2 = e.view((0, 2 * n), (n, n)).into_owned();
    (e0, p1, p2)
}

pub fn is_finite(v: &DVector<f64>) -> bool {
    v.iter().all(|x| x.is_finite())
}
