use crate::error::{Error, Result};
use crate::linalg::{eigen, ridge_regression};
use crate::model::VectorField;
use crate::monomials::MonomialBasis;
use crate::simulate::{integrate, InputSchedule, IntegrateOptions, Trajectory};
use crate::ssm::{SsmChart, RIDGE_SCALE};
use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Finite-difference scheme used to estimate `eta'` from sampled data.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum DerivativeScheme {
    /// Five-point central differences; two samples dropped at each end.
    #[default]
    #[serde(rename = "central-4th-order")]
    Central4,
    /// Local cubic least squares over 21 samples; ten dropped at each end.
    #[serde(rename = "spline")]
    Spline,
}

const SPLINE_HALF_WIDTH: usize = 10;

impl DerivativeScheme {
    pub fn half_width(self) -> usize {
        match self {
            DerivativeScheme::Central4 => 2,
            DerivativeScheme::Spline => SPLINE_HALF_WIDTH,
        }
    }

    /// Weights `w_j`, `j = -k..=k`, with `x'(t_i) ~ sum_j w_j x_{i+j} / dt`.
    pub fn weights(self) -> Vec<f64> {
        match self {
            DerivativeScheme::Central4 => vec![1.0 / 12.0, -8.0 / 12.0, 0.0, 8.0 / 12.0, -1.0 / 12.0],
            DerivativeScheme::Spline => {
                let k = SPLINE_HALF_WIDTH as i64;
                let a = DMatrix::from_fn((2 * k + 1) as usize, 4, |r, c| ((r as i64 - k) as f64).powi(c as i32));
                let pinv = (a.transpose() * &a)
                    .try_inverse()
                    .expect("cubic normal matrix is invertible")
                    * a.transpose();
                pinv.row(1).iter().copied().collect()
            }
        }
    }
}

/// Derivative of uniformly sampled vectors; the endpoints within the stencil
/// half-width are dropped. Returns the retained sample indices.
pub fn differentiate(
    times: &[f64],
    values: &[DVector<f64>],
    scheme: DerivativeScheme,
) -> Result<(Vec<usize>, Vec<DVector<f64>>)> {
    let k = scheme.half_width();
    let n = values.len();
    if times.len() != n {
        return Err(Error::dims("sample times", n, times.len()));
    }
    if n < 2 * k + 1 {
        return Err(Error::TooShort(format!(
            "{n} samples, the derivative stencil needs {}",
            2 * k + 1
        )));
    }
    let dt = times[1] - times[0];
    if !(dt > 0.0) {
        return Err(Error::Validation("sample times must increase".into()));
    }
    if times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt) {
        return Err(Error::Validation("derivative estimation needs a uniform time grid".into()));
    }
    let w = scheme.weights();
    let mut idx = Vec::with_capacity(n - 2 * k);
    let mut out = Vec::with_capacity(n - 2 * k);
    for i in k..n - k {
        let mut acc = DVector::zeros(values[i].len());
        for (j, &wj) in w.iter().enumerate() {
            if wj != 0.0 {
                acc.axpy(wj, &values[i + j - k], 1.0);
            }
        }
        idx.push(i);
        out.push(acc / dt);
    }
    Ok((idx, out))
}

/// Paired reduced states and their time derivatives.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct EtaSamples {
    pub eta: Vec<DVector<f64>>,
    pub eta_dot: Vec<DVector<f64>>,
}

impl EtaSamples {
    pub fn len(&self) -> usize {
        self.eta.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eta.is_empty()
    }

    pub fn extend(&mut self, other: EtaSamples) {
        self.eta.extend(other.eta);
        self.eta_dot.extend(other.eta_dot);
    }
}

/// Projects every trajectory onto the chart and differentiates in time.
pub fn estimate_eta_dot<'a, I>(trajectories: I, chart: &SsmChart, scheme: DerivativeScheme) -> Result<EtaSamples>
where
    I: IntoIterator<Item = &'a Trajectory>,
{
    let mut out = EtaSamples::default();
    for tr in trajectories {
        let etas: Vec<DVector<f64>> = tr.states.iter().map(|x| chart.project(x)).collect();
        let (idx, d) = differentiate(&tr.times, &etas, scheme)?;
        out.eta.extend(idx.into_iter().map(|i| etas[i].clone()));
        out.eta_dot.extend(d);
    }
    Ok(out)
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ReducedDiagnostics {
    pub residual_rms: Option<f64>,
    pub n_samples: Option<usize>,
    pub rho: Option<f64>,
}

/// Polynomial reduced field `eta' = W_r phi(eta)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedModel {
    pub d: usize,
    pub basis: MonomialBasis,
    #[serde(rename = "W_r", with = "crate::io::row_major")]
    pub w: DMatrix<f64>,
    #[serde(default)]
    pub chart_ref: Option<String>,
    #[serde(default)]
    pub derivative_scheme: Option<DerivativeScheme>,
    /// Largest `|eta|` seen in training.
    #[serde(default)]
    pub domain_radius: Option<f64>,
    #[serde(default)]
    pub diagnostics: ReducedDiagnostics,
}

impl ReducedModel {
    pub fn new(basis: MonomialBasis, w: DMatrix<f64>) -> Result<Self> {
        if w.ncols() != basis.len() {
            return Err(Error::dims("reduced coefficient columns", basis.len(), w.ncols()));
        }
        if w.nrows() != basis.d() {
            return Err(Error::dims("reduced coefficient rows", basis.d(), w.nrows()));
        }
        Ok(Self {
            d: basis.d(),
            basis,
            w,
            chart_ref: None,
            derivative_scheme: None,
            domain_radius: None,
            diagnostics: ReducedDiagnostics::default(),
        })
    }

    pub fn rhs(&self, eta: &DVector<f64>) -> DVector<f64> {
        &self.w * self.basis.eval(eta.as_slice())
    }

    pub fn jacobian(&self, eta: &DVector<f64>) -> DMatrix<f64> {
        &self.w * self.basis.jacobian(eta.as_slice())
    }

    /// Coefficient of one monomial in every component (zero if absent).
    pub fn coefficient(&self, exponent: &[u32]) -> DVector<f64> {
        self.basis
            .exponents()
            .iter()
            .position(|e| e.as_slice() == exponent)
            .map(|i| self.w.column(i).into_owned())
            .unwrap_or_else(|| DVector::zeros(self.d))
    }

    /// Matrix of the degree-one terms.
    pub fn linear_part(&self) -> DMatrix<f64> {
        let mut a = DMatrix::zeros(self.d, self.d);
        for j in 0..self.d {
            let mut e = vec![0u32; self.d];
            e[j] = 1;
            a.set_column(j, &self.coefficient(&e));
        }
        a
    }

    pub fn linear_eigenvalues(&self) -> Result<Vec<Complex64>> {
        Ok(eigen(&self.linear_part())?.0)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let m: Self = crate::io::read_json(path)?;
        Self::new(m.basis.clone(), m.w.clone())?;
        Ok(m)
    }
}

impl VectorField for ReducedModel {
    fn dim(&self) -> usize {
        self.d
    }

    fn eval(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        self.rhs(x)
    }

    fn eval_jacobian(&self, x: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        self.jacobian(x)
    }
}

/// Ridge regression of `eta'` on the monomials of `eta` of degrees `1..=m_r`.
pub fn fit_reduced(samples: &EtaSamples, m_r: u32, ridge_scale: Option<f64>) -> Result<ReducedModel> {
    if samples.is_empty() {
        return Err(Error::IllPosed("no samples for the reduced fit".into()));
    }
    if m_r < 1 {
        return Err(Error::Validation("reduced order must be at least 1".into()));
    }
    let d = samples.eta[0].len();
    let basis = MonomialBasis::new(d, 1, m_r);
    fit_on_basis(samples, basis, ridge_scale)
}

fn fit_on_basis(
    samples: &EtaSamples,
    basis: MonomialBasis,
    ridge_scale: Option<f64>,
) -> Result<ReducedModel> {
    let d = samples.eta_dot[0].len();
    let m = basis.len();
    if samples.len() < 10 * m {
        return Err(Error::IllPosed(format!(
            "{} samples for {m} monomials; at least {} are needed",
            samples.len(),
            10 * m
        )));
    }
    let features = basis.eval_many(&samples.eta);
    let targets = DMatrix::from_columns(&samples.eta_dot);
    let fit = ridge_regression(&features, &targets, ridge_scale.unwrap_or(RIDGE_SCALE))?;
    let resid = &targets - &fit.coeffs * &features;
    let rms = (resid.norm_squared() / samples.len() as f64).sqrt();
    let radius = samples.eta.iter().map(|e| e.norm()).fold(0.0, f64::max);
    Ok(ReducedModel {
        d,
        basis,
        w: fit.coeffs,
        chart_ref: None,
        derivative_scheme: None,
        domain_radius: Some(radius),
        diagnostics: ReducedDiagnostics {
            residual_rms: Some(rms),
            n_samples: Some(samples.len()),
            rho: Some(fit.rho),
        },
    })
}

/// RK4 on a reduced field. Leaving the ball of `10 * guard_radius` is an
/// error naming the training radius.
pub fn simulate_reduced_field<F: VectorField + ?Sized>(
    field: &F,
    guard_radius: Option<f64>,
    eta0: &DVector<f64>,
    dt: f64,
    t_end: f64,
) -> Result<Trajectory> {
    let mut opts = IntegrateOptions::new(dt, t_end);
    if let Some(r) = guard_radius {
        opts = opts.with_blowup(10.0 * r.max(1e-12));
    }
    integrate(field, eta0, &InputSchedule::zero(field.n_inputs()), &opts).map_err(|e| match (e, guard_radius) {
        (Error::Divergence { t, .. }, Some(radius)) => Error::OutsideDomain { t, radius },
        (e, _) => e,
    })
}

pub fn simulate_reduced(model: &ReducedModel, eta0: &DVector<f64>, dt: f64, t_end: f64) -> Result<Trajectory> {
    if eta0.len() != model.d {
        return Err(Error::dims("reduced initial state", model.d, eta0.len()));
    }
    simulate_reduced_field(model, model.domain_radius, eta0, dt, t_end)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NmteReport {
    pub nmte: f64,
    /// Normalized error per test trajectory; `None` for excluded ones.
    pub per_trajectory: Vec<Option<f64>>,
    pub n_excluded: usize,
    pub excluded_reasons: Vec<String>,
}

/// Normalized mean trajectory error: each test trajectory is re-simulated
/// in reduced coordinates from its projected initial state, lifted, and
/// compared sample by sample; the mean distance is divided by the mean
/// distance of the test samples from the anchor.
pub fn nmte_field<'a, F, I>(field: &F, guard_radius: Option<f64>, chart: &SsmChart, tests: I) -> Result<NmteReport>
where
    F: VectorField + ?Sized,
    I: IntoIterator<Item = &'a Trajectory>,
{
    let mut per = Vec::new();
    let mut reasons = Vec::new();
    for tr in tests {
        if tr.len() < 2 {
            return Err(Error::TooShort("test trajectory needs at least two samples".into()));
        }
        let dt = tr.times[1] - tr.times[0];
        let span = tr.t_end() - tr.t_start();
        let eta0 = chart.project(&tr.states[0]);
        match simulate_reduced_field(field, guard_radius, &eta0, dt, span) {
            Ok(red) => {
                let n = red.len().min(tr.len());
                let mut err = 0.0;
                let mut amp = 0.0;
                for k in 0..n {
                    err += (&tr.states[k] - chart.lift(&red.states[k])).norm();
                    amp += (&tr.states[k] - &chart.anchor).norm();
                }
                per.push(Some(if amp > 0.0 { err / amp } else { err / n as f64 }));
            }
            Err(e) if e.is_numerical() => {
                reasons.push(e.to_string());
                per.push(None);
            }
            Err(e) => return Err(e),
        }
    }
    let kept: Vec<f64> = per.iter().flatten().copied().collect();
    if kept.is_empty() {
        return Err(Error::NoResult(if per.is_empty() {
            "no test trajectories".into()
        } else {
            "every reduced simulation diverged".into()
        }));
    }
    Ok(NmteReport {
        nmte: kept.iter().sum::<f64>() / kept.len() as f64,
        n_excluded: per.len() - kept.len(),
        per_trajectory: per,
        excluded_reasons: reasons,
    })
}

pub fn nmte<'a, I>(model: &ReducedModel, chart: &SsmChart, tests: I) -> Result<NmteReport>
where
    I: IntoIterator<Item = &'a Trajectory>,
{
    nmte_field(model, model.domain_radius, chart, tests)
}

/// The field restricted to a chart, `eta' = V^T f(lift(eta), u)`.
///
/// This is the exact reduced dynamics when the chart is invariant.
#[derive(Clone, Debug)]
pub struct ChartRestricted<'a, F: VectorField + ?Sized> {
    pub field: &'a F,
    pub chart: &'a SsmChart,
    pub u: DVector<f64>,
}

impl<'a, F: VectorField + ?Sized> ChartRestricted<'a, F> {
    pub fn new(field: &'a F, chart: &'a SsmChart, u: DVector<f64>) -> Self {
        Self { field, chart, u }
    }
}

impl<F: VectorField + ?Sized> VectorField for ChartRestricted<'_, F> {
    fn dim(&self) -> usize {
        self.chart.d()
    }

    fn eval(&self, eta: &DVector<f64>, _u: &DVector<f64>) -> DVector<f64> {
        self.chart.v_e.transpose() * self.field.eval(&self.chart.lift(eta), &self.u)
    }

    fn eval_jacobian(&self, eta: &DVector<f64>, _u: &DVector<f64>) -> DMatrix<f64> {
        let x = self.chart.lift(eta);
        self.chart.v_e.transpose() * self.field.eval_jacobian(&x, &self.u) * self.chart.tangent(eta)
    }
}

/// Reduced field with a scalar parameter as an extra regressor coordinate:
/// `eta' = sum b_{j,l} eta^j (mu - mu0)^l`. The parameter has no dynamics.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParametricReducedModel {
    pub d: usize,
    pub parameter: String,
    pub mu0: f64,
    /// Monomials over `(eta_1, .., eta_d, mu - mu0)`.
    pub basis: MonomialBasis,
    #[serde(rename = "W_r", with = "crate::io::row_major")]
    pub w: DMatrix<f64>,
    #[serde(default)]
    pub derivative_scheme: Option<DerivativeScheme>,
    #[serde(default)]
    pub domain_radius: Option<f64>,
    #[serde(default)]
    pub diagnostics: ReducedDiagnostics,
}

impl ParametricReducedModel {
    pub fn rhs(&self, eta: &DVector<f64>, mu: f64) -> DVector<f64> {
        let mut q = eta.as_slice().to_vec();
        q.push(mu - self.mu0);
        &self.w * self.basis.eval(&q)
    }

    /// Coefficient `b_{j,l}` of `eta^j (mu - mu0)^l`.
    pub fn coefficient(&self, eta_exponent: &[u32], mu_exponent: u32) -> DVector<f64> {
        let mut e = eta_exponent.to_vec();
        e.push(mu_exponent);
        self.basis
            .exponents()
            .iter()
            .position(|x| *x == e)
            .map(|i| self.w.column(i).into_owned())
            .unwrap_or_else(|| DVector::zeros(self.d))
    }

    /// The reduced model at a fixed parameter value.
    pub fn at(&self, mu: f64) -> ReducedModel {
        let s = mu - self.mu0;
        let basis = MonomialBasis::new(self.d, 0, self.basis.degree_max());
        let index = basis.index_map();
        let mut w = DMatrix::zeros(self.d, basis.len());
        for (k, e) in self.basis.exponents().iter().enumerate() {
            let col = index[&e[..self.d].to_vec()];
            w.column_mut(col).axpy(s.powi(e[self.d] as i32), &self.w.column(k), 1.0);
        }
        let mut m = ReducedModel::new(basis, w).expect("slice dimensions are consistent");
        m.derivative_scheme = self.derivative_scheme;
        m.domain_radius = self.domain_radius;
        m
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_json(path, self)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        crate::io::read_json(path)
    }
}

/// Joint regression over `(eta, mu - mu0)` monomials of total degree `0..=q`.
pub fn fit_parametric_reduced(
    samples_by_mu: &[(f64, EtaSamples)],
    parameter: &str,
    mu0: f64,
    q: u32,
    ridge_scale: Option<f64>,
) -> Result<ParametricReducedModel> {
    let mut mus: Vec<f64> = samples_by_mu.iter().map(|s| s.0).collect();
    mus.sort_by(f64::total_cmp);
    mus.dedup();
    if mus.len() < 3 {
        return Err(Error::Validation(format!(
            "parametric fit needs at least 3 distinct {parameter} values, got {}",
            mus.len()
        )));
    }
    let mut all = EtaSamples::default();
    for (mu, s) in samples_by_mu {
        if s.is_empty() {
            return Err(Error::IllPosed(format!("no samples at {parameter} = {mu}")));
        }
        all.eta.extend(s.eta.iter().map(|e| {
            let mut v = e.as_slice().to_vec();
            v.push(mu - mu0);
            DVector::from_vec(v)
        }));
        all.eta_dot.extend(s.eta_dot.iter().cloned());
    }
    let d = all.eta_dot[0].len();
    let basis = MonomialBasis::new(d + 1, 0, q);
    let fitted = fit_on_basis(&all, basis, ridge_scale)?;
    let radius = all
        .eta
        .iter()
        .map(|e| e.rows(0, d).norm())
        .fold(0.0, f64::max);
    Ok(ParametricReducedModel {
        d,
        parameter: parameter.to_string(),
        mu0,
        basis: fitted.basis,
        w: fitted.w,
        derivative_scheme: None,
        domain_radius: Some(radius),
        diagnostics: fitted.diagnostics,
    })
}
