use crate::error::{Error, Result};
use crate::linalg::{orthonormalize, ridge_regression};
use crate::model::VectorField;
use crate::monomials::MonomialBasis;
use crate::simulate::Trajectory;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Default ridge scale, relative to the mean squared feature norm.
pub const RIDGE_SCALE: f64 = 1e-10;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChartDiagnostics {
    pub method: String,
    pub mfe_train: Option<f64>,
    /// Normalized training MFE for each order `2..=M`.
    pub residual_curve: Vec<(u32, f64)>,
    pub rho: Option<f64>,
    pub n_samples: Option<usize>,
}

/// Polynomial graph `x = x0 + V eta + H phi(eta)` over a spectral subspace.
///
/// The columns of `H` lie in the orthogonal complement of `V`, so that
/// `project(lift(eta)) = eta`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SsmChart {
    #[serde(with = "crate::io::plain_vec")]
    pub anchor: DVector<f64>,
    #[serde(rename = "V_E", with = "crate::io::row_major")]
    pub v_e: DMatrix<f64>,
    pub basis: MonomialBasis,
    #[serde(rename = "H", with = "crate::io::row_major")]
    pub h: DMatrix<f64>,
    #[serde(default)]
    pub diagnostics: ChartDiagnostics,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mfe {
    pub raw: f64,
    pub normalized: f64,
    pub n_samples: usize,
}

impl SsmChart {
    pub fn new(anchor: DVector<f64>, v_e: DMatrix<f64>, basis: MonomialBasis, h: DMatrix<f64>) -> Result<Self> {
        let n = anchor.len();
        if v_e.nrows() != n {
            return Err(Error::dims("chart basis rows", n, v_e.nrows()));
        }
        if basis.d() != v_e.ncols() {
            return Err(Error::dims("chart monomial dimension", v_e.ncols(), basis.d()));
        }
        if h.nrows() != n || h.ncols() != basis.len() {
            return Err(Error::dims("chart coefficient columns", basis.len(), h.ncols()));
        }
        Ok(Self {
            anchor,
            v_e,
            basis,
            h,
            diagnostics: ChartDiagnostics::default(),
        })
    }

    /// Flat chart (`H = 0`) with degrees `2..=m`.
    pub fn linear(anchor: DVector<f64>, v_e: DMatrix<f64>, m: u32) -> Self {
        let basis = MonomialBasis::new(v_e.ncols(), 2, m.max(2));
        let h = DMatrix::zeros(anchor.len(), basis.len());
        Self {
            anchor,
            v_e,
            basis,
            h,
            diagnostics: ChartDiagnostics::default(),
        }
    }

    pub fn n(&self) -> usize {
        self.anchor.len()
    }

    pub fn d(&self) -> usize {
        self.v_e.ncols()
    }

    pub fn order(&self) -> u32 {
        self.basis.degree_max()
    }

    pub fn lift(&self, eta: &DVector<f64>) -> DVector<f64> {
        &self.anchor + &self.v_e * eta + &self.h * self.basis.eval(eta.as_slice())
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        self.v_e.transpose() * (x - &self.anchor)
    }

    /// Tangent vectors of the chart at `eta`, as columns.
    pub fn tangent(&self, eta: &DVector<f64>) -> DMatrix<f64> {
        &self.v_e + &self.h * self.basis.jacobian(eta.as_slice())
    }

    /// Coefficient column of the given exponent, if present.
    pub fn coefficient(&self, exponent: &[u32]) -> Option<DVector<f64>> {
        self.basis
            .exponents()
            .iter()
            .position(|e| e.as_slice() == exponent)
            .map(|i| self.h.column(i).into_owned())
    }

    /// Mean distance of samples from the chart, raw and normalized by the
    /// mean distance of the samples from the anchor.
    pub fn mfe<'a, I>(&self, trajectories: I) -> Result<Mfe>
    where
        I: IntoIterator<Item = &'a Trajectory>,
    {
        let mut sum = 0.0;
        let mut amp = 0.0;
        let mut count = 0usize;
        for tr in trajectories {
            for x in &tr.states {
                if x.len() != self.n() {
                    return Err(Error::dims("MFE sample", self.n(), x.len()));
                }
                sum += (x - self.lift(&self.project(x))).norm();
                amp += (x - &self.anchor).norm();
                count += 1;
            }
        }
        if count == 0 {
            return Err(Error::Validation("MFE needs at least one sample".into()));
        }
        let raw = sum / count as f64;
        let mean_amp = amp / count as f64;
        Ok(Mfe {
            raw,
            normalized: if mean_amp > 0.0 { raw / mean_amp } else { raw },
            n_samples: count,
        })
    }

    /// Normal component of the field at `lift(eta)`, relative to its norm.
    pub fn invariance_residual<F: VectorField + ?Sized>(
        &self,
        field: &F,
        u: &DVector<f64>,
        eta: &DVector<f64>,
    ) -> f64 {
        let x = self.lift(eta);
        let f = field.eval(&x, u);
        let norm = f.norm();
        if norm == 0.0 {
            return 0.0;
        }
        let t = orthonormalize(&self.tangent(eta));
        let normal = &f - &t * (t.transpose() * &f);
        normal.norm() / norm
    }

    pub fn save(&self, path: impl AsRef<std::path::Path>) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: impl AsRef<std::path::Path>) -> Result<Self> {
        let chart: Self = crate::io::read_json(path)?;
        Self::new(chart.anchor.clone(), chart.v_e.clone(), chart.basis.clone(), chart.h.clone())?;
        Ok(chart)
    }
}

/// Regression data for a graph fit: reduced coordinates and the
/// complement-projected offsets of every sample.
pub(crate) fn graph_samples<'a, I>(
    trajectories: I,
    anchor: &DVector<f64>,
    v_e: &DMatrix<f64>,
) -> Result<(Vec<DVector<f64>>, DMatrix<f64>)>
where
    I: IntoIterator<Item = &'a Trajectory>,
{
    let n = anchor.len();
    let mut etas = Vec::new();
    let mut targets = Vec::new();
    for tr in trajectories {
        for x in &tr.states {
            if x.len() != n {
                return Err(Error::dims("chart sample", n, x.len()));
            }
            let y = x - anchor;
            let eta = v_e.transpose() * &y;
            targets.push(&y - v_e * &eta);
            etas.push(eta);
        }
    }
    if etas.is_empty() {
        return Err(Error::IllPosed("no samples to fit".into()));
    }
    Ok((etas, DMatrix::from_columns(&targets)))
}

pub(crate) fn complement_projector(v_e: &DMatrix<f64>) -> DMatrix<f64> {
    let n = v_e.nrows();
    DMatrix::identity(n, n) - v_e * v_e.transpose()
}

/// Data-driven chart of order `m` by ridge regression of the normal offsets
/// on the monomials of `eta = V^T (x - x0)`.
pub fn fit_ssm_data<'a, I>(
    trajectories: I,
    anchor: &DVector<f64>,
    v_e: &DMatrix<f64>,
    m: u32,
) -> Result<SsmChart>
where
    I: IntoIterator<Item = &'a Trajectory>,
{
    if m < 2 {
        return Err(Error::Validation("chart order must be at least 2".into()));
    }
    if v_e.nrows() != anchor.len() {
        return Err(Error::dims("chart basis rows", anchor.len(), v_e.nrows()));
    }
    let gram_err = (v_e.transpose() * v_e - DMatrix::<f64>::identity(v_e.ncols(), v_e.ncols())).amax();
    if gram_err > 1e-8 {
        return Err(Error::Validation(format!(
            "V_E must have orthonormal columns (error {gram_err:e})"
        )));
    }
    let trajectories: Vec<&Trajectory> = trajectories.into_iter().collect();
    let (etas, targets) = graph_samples(trajectories.iter().copied(), anchor, v_e)?;
    let proj = complement_projector(v_e);
    let mut curve = Vec::new();
    let mut final_chart = None;
    for order in 2..=m {
        let basis = MonomialBasis::new(v_e.ncols(), 2, order);
        let features = basis.eval_many(&etas);
        let fit = ridge_regression(&features, &targets, RIDGE_SCALE).map_err(|e| match e {
            Error::IllPosed(msg) => Error::IllPosed(format!("order {order}: {msg}")),
            other => other,
        })?;
        let mut chart = SsmChart::new(anchor.clone(), v_e.clone(), basis, &proj * fit.coeffs)?;
        let mfe = chart.mfe(trajectories.iter().copied())?;
        curve.push((order, mfe.normalized));
        if order == m {
            chart.diagnostics = ChartDiagnostics {
                method: "data-driven".into(),
                mfe_train: Some(mfe.normalized),
                residual_curve: Vec::new(),
                rho: Some(fit.rho),
                n_samples: Some(etas.len()),
            };
            final_chart = Some(chart);
        }
    }
    let mut chart = final_chart.expect("order range is nonempty");
    chart.diagnostics.residual_curve = curve;
    Ok(chart)
}

/// Smallest order whose MFE improves on the previous order by less than
/// the given fraction (the default rule uses 0.1).
pub fn select_order(curve: &[(u32, f64)], min_improvement: f64) -> Option<u32> {
    let first = curve.first()?;
    for w in curve.windows(2) {
        let (prev, next) = (w[0].1, w[1].1);
        if prev <= 0.0 || (prev - next) / prev < min_improvement {
            return Some(w[0].0);
        }
    }
    curve.last().map(|c| c.0).or(Some(first.0))
}
