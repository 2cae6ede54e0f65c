use crate::error::{Error, Result};
use crate::linalg::eigen;
use crate::model::VectorField;
use nalgebra::DVector;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Stability {
    Stable,
    Unstable,
    Nonhyperbolic,
}

impl Stability {
    pub fn from_eigenvalues(values: &[Complex64], hyperbolicity_tol: f64) -> Self {
        if values.iter().any(|l| l.re.abs() <= hyperbolicity_tol) {
            Stability::Nonhyperbolic
        } else if values.iter().all(|l| l.re < 0.0) {
            Stability::Stable
        } else {
            Stability::Unstable
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Stability::Stable => "stable",
            Stability::Unstable => "unstable",
            Stability::Nonhyperbolic => "nonhyperbolic",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    #[serde(with = "crate::io::plain_vec")]
    pub x0: DVector<f64>,
    #[serde(with = "crate::io::plain_vec")]
    pub u: DVector<f64>,
    pub residual_norm: f64,
    pub stability: Stability,
    /// Largest real part of the Jacobian spectrum.
    pub re_lambda_max: f64,
    /// Real part of smallest magnitude.
    pub re_lambda_nearest_zero: f64,
}

impl FixedPoint {
    /// Classifies a known root.
    pub fn at<F: VectorField + ?Sized>(
        field: &F,
        x0: DVector<f64>,
        u: DVector<f64>,
        hyperbolicity_tol: f64,
    ) -> Result<Self> {
        let residual_norm = field.eval(&x0, &u).norm();
        let (values, _) = eigen(&field.eval_jacobian(&x0, &u))?;
        let re_lambda_max = values.iter().map(|l| l.re).fold(f64::NEG_INFINITY, f64::max);
        let re_lambda_nearest_zero = values
            .iter()
            .map(|l| l.re)
            .min_by(|a, b| a.abs().total_cmp(&b.abs()))
            .unwrap_or(0.0);
        Ok(Self {
            stability: Stability::from_eigenvalues(&values, hyperbolicity_tol),
            x0,
            u,
            residual_norm,
            re_lambda_max,
            re_lambda_nearest_zero,
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NewtonOptions {
    pub tol: f64,
    pub max_iter: usize,
    pub dedup_tol: f64,
    pub hyperbolicity_tol: f64,
    pub max_halvings: usize,
}

impl Default for NewtonOptions {
    fn default() -> Self {
        Self {
            tol: 1e-10,
            max_iter: 100,
            dedup_tol: 1e-6,
            hyperbolicity_tol: 1e-8,
            max_halvings: 30,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSearch {
    pub points: Vec<FixedPoint>,
    pub n_seeds: usize,
    pub n_failed: usize,
}

/// Damped Newton from one seed; `None` if it does not converge.
pub fn newton<F: VectorField + ?Sized>(
    field: &F,
    u: &DVector<f64>,
    seed: &DVector<f64>,
    opts: &NewtonOptions,
) -> Option<DVector<f64>> {
    let mut x = seed.clone();
    let mut fx = field.eval(&x, u);
    let mut r2 = fx.norm_squared();
    for _ in 0..opts.max_iter {
        if !r2.is_finite() {
            return None;
        }
        if r2.sqrt() <= opts.tol {
            return Some(polish(field, u, x, r2));
        }
        let jac = field.eval_jacobian(&x, u);
        let step = jac.lu().solve(&(-&fx))?;
        if !step.iter().all(|v| v.is_finite()) {
            return None;
        }
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..=opts.max_halvings {
            let trial = &x + &step * alpha;
            let ft = field.eval(&trial, u);
            let rt = ft.norm_squared();
            if rt < r2 {
                x = trial;
                fx = ft;
                r2 = rt;
                accepted = true;
                break;
            }
            alpha *= 0.5;
        }
        if !accepted {
            return (r2.sqrt() <= opts.tol).then_some(x);
        }
    }
    (r2.sqrt() <= opts.tol).then_some(x)
}

/// Plain Newton steps past convergence while the residual keeps shrinking,
/// so that roots of higher multiplicity collapse onto one point.
fn polish<F: VectorField + ?Sized>(
    field: &F,
    u: &DVector<f64>,
    mut x: DVector<f64>,
    mut r2: f64,
) -> DVector<f64> {
    for _ in 0..80 {
        let fx = field.eval(&x, u);
        let Some(step) = field.eval_jacobian(&x, u).lu().solve(&(-&fx)) else {
            break;
        };
        let trial = &x + step;
        let rt = field.eval(&trial, u).norm_squared();
        if !(rt < 0.81 * r2) {
            break;
        }
        x = trial;
        r2 = rt;
    }
    x
}

/// Newton from every seed, deduplicated and classified.
pub fn find_fixed_points<F: VectorField + ?Sized>(
    field: &F,
    u: &DVector<f64>,
    seeds: &[DVector<f64>],
    opts: &NewtonOptions,
) -> Result<FixedPointSearch> {
    if seeds.is_empty() {
        return Err(Error::Validation("fixed-point search needs at least one seed".into()));
    }
    if u.len() != field.n_inputs() {
        return Err(Error::dims("frozen input", field.n_inputs(), u.len()));
    }
    let mut roots: Vec<DVector<f64>> = Vec::new();
    let mut n_failed = 0;
    for seed in seeds {
        if seed.len() != field.dim() {
            return Err(Error::dims("fixed-point seed", field.dim(), seed.len()));
        }
        match newton(field, u, seed, opts) {
            Some(x) => {
                if roots.iter().all(|r| (r - &x).norm() >= opts.dedup_tol) {
                    roots.push(x);
                }
            }
            None => n_failed += 1,
        }
    }
    let points = roots
        .into_iter()
        .map(|x| FixedPoint::at(field, x, u.clone(), opts.hyperbolicity_tol))
        .collect::<Result<Vec<_>>>()?;
    Ok(FixedPointSearch {
        points,
        n_seeds: seeds.len(),
        n_failed,
    })
}
