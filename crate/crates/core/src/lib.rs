//! Spectral submanifold model reduction.
//!
//! The crate extracts low-dimensional polynomial models from trajectories of
//! high-dimensional smooth systems (continuous-time recurrent networks in
//! particular) and analyzes the reduced dynamics.
//!
//! Module map:
//! - [`model`]: system families and the [`VectorField`] trait
//! - [`simulate`]: RK4 integration, bounded noise, ensembles
//! - [`steady`]: fixed points, spectra, subspace selection, continuation
//! - [`ssm`]: polynomial charts (data-driven and equation-driven)
//! - [`reduced`]: reduced models and phase-portrait analysis
//! - [`nonautonomous`]: anchor trajectories and time-dependent charts
//! - [`ftle`]: finite-time Lyapunov exponent fields and ridges

pub mod error;
pub mod ftle;
pub mod io;
pub mod linalg;
pub mod model;
pub mod monomials;
pub mod nonautonomous;
pub mod reduced;
pub mod simulate;
pub mod ssm;
pub mod steady;
pub mod tps;

pub use error::{Error, Result};
pub use model::VectorField;
pub use monomials::MonomialBasis;

pub const VERSION: &str = env!("CARGO_PKG_VERSION");
