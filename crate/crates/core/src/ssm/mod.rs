//! Polynomial charts of spectral submanifolds: data-driven graph regression,
//! the equation-driven Taylor recursion, lifting/projection and
//! parameter-extended charts.

mod chart;
mod extended;
mod taylor;

pub use chart::{fit_ssm_data, select_order, ChartDiagnostics, Mfe, SsmChart, RIDGE_SCALE};
pub use extended::{extended_exponents, fit_extended_ssm, ExtendedSsmChart, ParameterSlice};
pub use taylor::{orthogonal_complement, ssm_taylor, TaylorSsm};
