use super::chart::{complement_projector, graph_samples, ChartDiagnostics, SsmChart, RIDGE_SCALE};
use crate::error::{Error, Result};
use crate::linalg::ridge_regression;
use crate::monomials::MonomialBasis;
use crate::simulate::Trajectory;
use crate::steady::{FixedPoint, Stability};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Trajectories recorded at one frozen parameter value.
#[derive(Clone, Debug)]
pub struct ParameterSlice {
    pub mu: f64,
    pub trajectories: Vec<Trajectory>,
    /// Fixed point of the family at this parameter, if it was found.
    pub fixed_point: Option<FixedPoint>,
}

/// Chart over the extended coordinates `(eta, mu - mu0)`.
///
/// The graph contains every monomial of total degree `1..=M` in the extended
/// coordinates except the purely linear ones in `eta`, so each slice is a
/// chart whose offset and tilt may vary with `mu`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExtendedSsmChart {
    pub parameter: String,
    pub mu0: f64,
    #[serde(with = "crate::io::plain_vec")]
    pub anchor: DVector<f64>,
    #[serde(rename = "V_E", with = "crate::io::row_major")]
    pub v_e: DMatrix<f64>,
    /// Exponents over `(eta_1, .., eta_d, mu)`.
    pub exponents: Vec<Vec<u32>>,
    #[serde(rename = "H", with = "crate::io::row_major")]
    pub h: DMatrix<f64>,
    pub degree_max: u32,
    pub diagnostics: ChartDiagnostics,
}

/// Extended exponents of total degree `1..=m` without the pure-`eta` linear ones.
pub fn extended_exponents(d: usize, m: u32) -> Vec<Vec<u32>> {
    MonomialBasis::new(d + 1, 1, m)
        .exponents()
        .iter()
        .filter(|e| !(e[d] == 0 && e[..d].iter().sum::<u32>() == 1))
        .cloned()
        .collect()
}

fn eval_extended(exps: &[Vec<u32>], eta: &[f64], mu: f64) -> DVector<f64> {
    DVector::from_iterator(
        exps.len(),
        exps.iter().map(|e| {
            let mut v = mu.powi(e[eta.len()] as i32);
            for (x, &k) in eta.iter().zip(e) {
                v *= x.powi(k as i32);
            }
            v
        }),
    )
}

impl ExtendedSsmChart {
    pub fn d(&self) -> usize {
        self.v_e.ncols()
    }

    pub fn lift(&self, eta: &DVector<f64>, mu: f64) -> DVector<f64> {
        &self.anchor
            + &self.v_e * eta
            + &self.h * eval_extended(&self.exponents, eta.as_slice(), mu - self.mu0)
    }

    pub fn project(&self, x: &DVector<f64>) -> DVector<f64> {
        self.v_e.transpose() * (x - &self.anchor)
    }

    /// Coefficient column of an extended exponent, if present.
    pub fn coefficient(&self, exponent: &[u32]) -> Option<DVector<f64>> {
        self.exponents
            .iter()
            .position(|e| e.as_slice() == exponent)
            .map(|i| self.h.column(i).into_owned())
    }

    /// The chart at fixed `mu`, over degrees `0..=M` in `eta`.
    pub fn slice(&self, mu: f64) -> SsmChart {
        let d = self.d();
        let s = mu - self.mu0;
        let basis = MonomialBasis::new(d, 0, self.degree_max);
        let index = basis.index_map();
        let mut h = DMatrix::zeros(self.anchor.len(), basis.len());
        for (k, e) in self.exponents.iter().enumerate() {
            let col = index[&e[..d].to_vec()];
            let w = s.powi(e[d] as i32);
            let mut target = h.column_mut(col);
            target.axpy(w, &self.h.column(k), 1.0);
        }
        let mut chart = SsmChart::new(self.anchor.clone(), self.v_e.clone(), basis, h)
            .expect("slice dimensions are consistent");
        chart.diagnostics.method = format!("slice at {} = {mu}", self.parameter);
        chart
    }
}

/// Single regression over all parameter values, with `mu - mu0` treated as
/// an additional coordinate of the regressor.
pub fn fit_extended_ssm(
    slices: &[ParameterSlice],
    parameter: &str,
    mu0: f64,
    anchor: &DVector<f64>,
    v_e: &DMatrix<f64>,
    m: u32,
) -> Result<ExtendedSsmChart> {
    if m < 2 {
        return Err(Error::Validation("chart order must be at least 2".into()));
    }
    let mut mus: Vec<f64> = slices.iter().map(|s| s.mu).collect();
    mus.sort_by(f64::total_cmp);
    mus.dedup();
    if mus.len() < 3 {
        return Err(Error::Validation(format!(
            "extended chart needs at least 3 distinct {parameter} values, got {}",
            mus.len()
        )));
    }
    let mut reference: Option<Stability> = None;
    for s in slices {
        let fp = s.fixed_point.as_ref().ok_or_else(|| {
            Error::AnchorLost(format!(
                "no fixed point at {parameter} = {}; fit separate charts per parameter value",
                s.mu
            ))
        })?;
        if fp.stability == Stability::Nonhyperbolic || *reference.get_or_insert(fp.stability) != fp.stability {
            return Err(Error::AnchorLost(format!(
                "fixed point changes type at {parameter} = {}; fit separate charts per parameter value",
                s.mu
            )));
        }
    }
    let d = v_e.ncols();
    let exponents = extended_exponents(d, m);
    let mut features = Vec::new();
    let mut targets = Vec::new();
    for s in slices {
        let (etas, t) = graph_samples(s.trajectories.iter(), anchor, v_e)?;
        for eta in &etas {
            features.push(eval_extended(&exponents, eta.as_slice(), s.mu - mu0));
        }
        targets.push(t);
    }
    let features = DMatrix::from_columns(&features);
    let n = anchor.len();
    let total: usize = targets.iter().map(|t| t.ncols()).sum();
    let mut target = DMatrix::zeros(n, total);
    let mut col = 0;
    for t in &targets {
        target.columns_mut(col, t.ncols()).copy_from(t);
        col += t.ncols();
    }
    let fit = ridge_regression(&features, &target, RIDGE_SCALE)?;
    let h = complement_projector(v_e) * fit.coeffs;
    let resid = &target - &h * &features;
    let mean_amp: f64 = slices
        .iter()
        .flat_map(|s| s.trajectories.iter().flat_map(|t| t.states.iter()))
        .map(|x| (x - anchor).norm())
        .sum::<f64>()
        / total as f64;
    let raw = resid.column_iter().map(|c| c.norm()).sum::<f64>() / total as f64;
    Ok(ExtendedSsmChart {
        parameter: parameter.to_string(),
        mu0,
        anchor: anchor.clone(),
        v_e: v_e.clone(),
        exponents,
        h,
        degree_max: m,
        diagnostics: ChartDiagnostics {
            method: "data-driven-extended".into(),
            mfe_train: Some(if mean_amp > 0.0 { raw / mean_amp } else { raw }),
            residual_curve: Vec::new(),
            rho: Some(fit.rho),
            n_samples: Some(total),
        },
    })
}
