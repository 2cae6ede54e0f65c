//! Reduced vector fields on a chart: derivative estimation, polynomial
//! regression, reduced simulation and NMTE, phase-portrait objects and
//! Lyapunov-type numbers.

mod model;
mod portrait;
mod report;
mod type_numbers;

pub use model::{
    differentiate, estimate_eta_dot, fit_parametric_reduced, fit_reduced, nmte, nmte_field,
    simulate_reduced, simulate_reduced_field, ChartRestricted, DerivativeScheme, EtaSamples,
    NmteReport, ParametricReducedModel, ReducedDiagnostics, ReducedModel,
};
pub use portrait::{
    basin_widths_1d, detect_heteroclinic, detect_limit_cycle, reduced_fixed_points, Basin1d,
    Basins1d, BranchStatus, CycleOptions, HeteroclinicBranch, HeteroclinicOptions,
    HeteroclinicReport, LimitCycle, ReducedFixedPoint, RootSearchOptions,
};
pub use report::{domain_from_points, phase_portrait, FixedPointTypeNumbers, PhasePortraitReport, PortraitOptions};
pub use type_numbers::{
    identify_tangent, lyapunov_type_numbers, slowest_indices, type_number_scan, RhoBound,
    TypeNumberRow, TypeNumberScan, TypeNumbers,
};
