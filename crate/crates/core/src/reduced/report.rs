use super::portrait::{
    basin_widths_1d, detect_heteroclinic, detect_limit_cycle, reduced_fixed_points, CycleOptions,
    HeteroclinicOptions, HeteroclinicReport, LimitCycle, ReducedFixedPoint, RootSearchOptions,
};
use super::type_numbers::{identify_tangent, lyapunov_type_numbers, TypeNumbers};
use crate::error::{Error, Result};
use crate::model::VectorField;
use crate::ssm::SsmChart;
use crate::steady::{SpectralDecomposition, Stability};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PortraitOptions {
    pub roots: RootSearchOptions,
    pub cycle: CycleOptions,
    pub heteroclinic: HeteroclinicOptions,
    pub cycle_dt: f64,
    pub cycle_t_max: f64,
}

impl Default for PortraitOptions {
    fn default() -> Self {
        Self {
            roots: RootSearchOptions::default(),
            cycle: CycleOptions::default(),
            heteroclinic: HeteroclinicOptions::default(),
            cycle_dt: 1e-3,
            cycle_t_max: 200.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FixedPointTypeNumbers {
    pub fixed_point: usize,
    pub type_numbers: TypeNumbers,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePortraitReport {
    pub domain: Vec<(f64, f64)>,
    pub fixed_points_reduced: Vec<ReducedFixedPoint>,
    pub basin_boundaries_1d: Vec<f64>,
    pub limit_cycles: Vec<LimitCycle>,
    pub heteroclinics: Option<HeteroclinicReport>,
    pub type_numbers: Vec<FixedPointTypeNumbers>,
}

/// Box `factor` times the bounding box of `points`, about its center.
pub fn domain_from_points(points: &[DVector<f64>], factor: f64) -> Result<Vec<(f64, f64)>> {
    let first = points
        .first()
        .ok_or_else(|| Error::Validation("no points to bound".into()))?;
    let d = first.len();
    let mut lo = first.clone();
    let mut hi = first.clone();
    for p in points {
        if p.len() != d {
            return Err(Error::dims("bounding-box point", d, p.len()));
        }
        lo = lo.inf(p);
        hi = hi.sup(p);
    }
    Ok((0..d)
        .map(|k| {
            let c = 0.5 * (lo[k] + hi[k]);
            let r = (0.5 * (hi[k] - lo[k]) * factor).max(1e-12);
            (c - r, c + r)
        })
        .collect())
}

/// Fixed points, basin separators (d = 1), limit cycles and heteroclinic
/// connections (d = 2) of a reduced field, plus type numbers of every
/// reduced fixed point when the full field and its chart are supplied.
pub fn phase_portrait<R, F>(
    reduced: &R,
    full: Option<(&F, &DVector<f64>, &SsmChart)>,
    domain: &[(f64, f64)],
    opts: &PortraitOptions,
) -> Result<PhasePortraitReport>
where
    R: VectorField + ?Sized,
    F: VectorField + ?Sized,
{
    let d = reduced.dim();
    let fixed = reduced_fixed_points(reduced, domain, &opts.roots)?;
    let basin_boundaries_1d = if d == 1 {
        match basin_widths_1d(reduced, domain[0], &opts.roots) {
            Ok(b) => b.separators,
            Err(Error::NoResult(_)) => Vec::new(),
            Err(e) => return Err(e),
        }
    } else {
        Vec::new()
    };

    let mut limit_cycles: Vec<LimitCycle> = Vec::new();
    let mut heteroclinics = None;
    if d == 2 {
        let mut starts: Vec<DVector<f64>> = fixed
            .iter()
            .filter(|p| p.stability != Stability::Stable)
            .map(|p| {
                let mut s = p.eta.clone();
                s[0] += 1e-2 * (domain[0].1 - domain[0].0);
                s
            })
            .collect();
        starts.push(DVector::from_vec(domain.iter().map(|(lo, hi)| lo + 0.9 * (hi - lo)).collect()));
        for s in &starts {
            let found = match detect_limit_cycle(reduced, s, opts.cycle_dt, opts.cycle_t_max, &opts.cycle) {
                Ok(c) => c,
                Err(e) if e.is_numerical() => None,
                Err(e) => return Err(e),
            };
            if let Some(c) = found {
                let dup = limit_cycles.iter().any(|k| {
                    (k.period - c.period).abs() <= 1e-3 * k.period
                        && k.amplitude.iter().zip(&c.amplitude).all(|(a, b)| (a - b).abs() <= 1e-2 * a.abs().max(1e-9))
                });
                if !dup {
                    limit_cycles.push(c);
                }
            }
        }
        heteroclinics = Some(detect_heteroclinic(reduced, &fixed, domain, &opts.heteroclinic)?);
    }

    let mut type_numbers = Vec::new();
    if let Some((field, u, chart)) = full {
        if chart.d() != d {
            return Err(Error::dims("chart dimension", d, chart.d()));
        }
        for (i, p) in fixed.iter().enumerate() {
            let x = chart.lift(&p.eta);
            let spec = SpectralDecomposition::new(&field.eval_jacobian(&x, u))?;
            let tangent = identify_tangent(&spec, &chart.tangent(&p.eta))?;
            type_numbers.push(FixedPointTypeNumbers {
                fixed_point: i,
                type_numbers: lyapunov_type_numbers(&spec.real_parts(), &tangent)?,
            });
        }
    }

    Ok(PhasePortraitReport {
        domain: domain.to_vec(),
        fixed_points_reduced: fixed,
        basin_boundaries_1d,
        limit_cycles,
        heteroclinics,
        type_numbers,
    })
}
