//! Fixed points, linear spectra, slow-subspace selection and parameter
//! continuation.

mod continuation;
mod fixed_points;
mod spectrum;

pub use continuation::{
    continuation_scan, BifurcationDiagram, BifurcationEvent, BranchPoint, ContinuationOptions,
    EventKind, UnmatchedBranchEnd,
};
pub use fixed_points::{find_fixed_points, newton, FixedPoint, FixedPointSearch, NewtonOptions, Stability};
pub use spectrum::{
    check_nonresonance, default_resonance_order, linearize, select_slow_subspace,
    spectral_quotient, ResonanceHit, SpectralDecomposition, SpectralQuotient, SubspaceSelection,
    GAP_TOL, RESONANCE_TOL,
};
