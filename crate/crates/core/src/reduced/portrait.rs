use super::model::simulate_reduced_field;
use crate::error::{Error, Result};
use crate::linalg::eigen;
use crate::model::VectorField;
use crate::simulate::rk4_step;
use crate::steady::{newton, NewtonOptions, Stability};
use nalgebra::DVector;
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReducedFixedPoint {
    #[serde(with = "crate::io::plain_vec")]
    pub eta: DVector<f64>,
    pub stability: Stability,
    /// `(re, im)` of the reduced Jacobian spectrum.
    pub eigenvalues: Vec<(f64, f64)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RootSearchOptions {
    /// Grid cells for the one-dimensional sign-change search.
    pub cells_1d: usize,
    /// Grid points per axis for the multistart search (capped by `max_starts`).
    pub points_per_axis: usize,
    pub max_starts: usize,
    pub hyperbolicity_tol: f64,
    pub dedup_tol: f64,
}

impl Default for RootSearchOptions {
    fn default() -> Self {
        Self {
            cells_1d: 10_000,
            points_per_axis: 50,
            max_starts: 100_000,
            hyperbolicity_tol: 1e-8,
            dedup_tol: 1e-6,
        }
    }
}

fn classify<F: VectorField + ?Sized>(field: &F, eta: DVector<f64>, tol: f64) -> Result<ReducedFixedPoint> {
    let u = DVector::zeros(field.n_inputs());
    let (values, _) = eigen(&field.eval_jacobian(&eta, &u))?;
    Ok(ReducedFixedPoint {
        stability: Stability::from_eigenvalues(&values, tol),
        eigenvalues: values.iter().map(|l| (l.re, l.im)).collect(),
        eta,
    })
}

fn check_box(d: usize, domain: &[(f64, f64)]) -> Result<()> {
    if domain.len() != d {
        return Err(Error::dims("domain box", d, domain.len()));
    }
    if domain.iter().any(|&(lo, hi)| !(lo < hi)) {
        return Err(Error::Validation("domain box needs lo < hi on every axis".into()));
    }
    Ok(())
}

/// Zeros of a reduced field inside an axis-aligned box, sorted
/// lexicographically.
pub fn reduced_fixed_points<F: VectorField + ?Sized>(
    field: &F,
    domain: &[(f64, f64)],
    opts: &RootSearchOptions,
) -> Result<Vec<ReducedFixedPoint>> {
    let d = field.dim();
    check_box(d, domain)?;
    let u = DVector::zeros(field.n_inputs());
    let mut roots: Vec<DVector<f64>> = Vec::new();
    if d == 1 {
        let (lo, hi) = domain[0];
        let n = opts.cells_1d.max(1);
        let f = |x: f64| field.eval(&DVector::from_element(1, x), &u)[0];
        let xs: Vec<f64> = (0..=n).map(|i| lo + (hi - lo) * i as f64 / n as f64).collect();
        let fs: Vec<f64> = xs.iter().map(|&x| f(x)).collect();
        for i in 0..n {
            let (mut a, mut b, fa, fb) = (xs[i], xs[i + 1], fs[i], fs[i + 1]);
            if fa == 0.0 {
                roots.push(DVector::from_element(1, a));
                continue;
            }
            if i == n - 1 && fb == 0.0 {
                roots.push(DVector::from_element(1, b));
            }
            if fa * fb >= 0.0 {
                continue;
            }
            let mut fa = fa;
            for _ in 0..200 {
                let m = 0.5 * (a + b);
                let fm = f(m);
                if fm == 0.0 || b - a <= 4.0 * f64::EPSILON * m.abs().max(1.0) {
                    a = m;
                    b = m;
                    break;
                }
                if fa * fm < 0.0 {
                    b = m;
                } else {
                    a = m;
                    fa = fm;
                }
            }
            let mut x = 0.5 * (a + b);
            for _ in 0..5 {
                let dfx = field.eval_jacobian(&DVector::from_element(1, x), &u)[(0, 0)];
                if dfx == 0.0 {
                    break;
                }
                let next = x - f(x) / dfx;
                if !(next >= xs[i] && next <= xs[i + 1]) || f(next).abs() >= f(x).abs() {
                    break;
                }
                x = next;
            }
            roots.push(DVector::from_element(1, x));
        }
    } else {
        let per_axis = opts
            .points_per_axis
            .min((opts.max_starts as f64).powf(1.0 / d as f64).floor() as usize)
            .max(2);
        let newton_opts = NewtonOptions::default();
        let total = per_axis.pow(d as u32);
        for k in 0..total {
            let mut rem = k;
            let seed = DVector::from_iterator(
                d,
                domain.iter().map(|&(lo, hi)| {
                    let i = rem % per_axis;
                    rem /= per_axis;
                    lo + (hi - lo) * i as f64 / (per_axis - 1) as f64
                }),
            );
            if let Some(x) = newton(field, &u, &seed, &newton_opts) {
                let inside = x
                    .iter()
                    .zip(domain)
                    .all(|(v, &(lo, hi))| *v >= lo - 1e-9 * (hi - lo) && *v <= hi + 1e-9 * (hi - lo));
                if inside && roots.iter().all(|r| (r - &x).norm() >= opts.dedup_tol) {
                    roots.push(x);
                }
            }
        }
    }
    roots.sort_by(|a, b| {
        a.iter()
            .zip(b.iter())
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
    });
    roots.dedup_by(|a, b| (&*a - &*b).norm() < opts.dedup_tol);
    roots
        .into_iter()
        .map(|r| classify(field, r, opts.hyperbolicity_tol))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Basin1d {
    pub attractor: f64,
    pub lo: f64,
    pub hi: f64,
    pub width: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Basins1d {
    pub separators: Vec<f64>,
    pub basins: Vec<Basin1d>,
}

/// Separators and basin widths of a scalar reduced field on an interval.
pub fn basin_widths_1d<F: VectorField + ?Sized>(
    field: &F,
    domain: (f64, f64),
    opts: &RootSearchOptions,
) -> Result<Basins1d> {
    if field.dim() != 1 {
        return Err(Error::Validation("basin widths need a one-dimensional field".into()));
    }
    let roots = reduced_fixed_points(field, &[domain], opts)?;
    if !roots.iter().any(|r| r.stability == Stability::Stable) {
        return Err(Error::NoResult("no stable fixed point in the domain".into()));
    }
    let xs: Vec<f64> = roots.iter().map(|r| r.eta[0]).collect();
    let separators = roots
        .iter()
        .filter(|r| r.stability != Stability::Stable)
        .map(|r| r.eta[0])
        .collect();
    let basins = roots
        .iter()
        .enumerate()
        .filter(|(_, r)| r.stability == Stability::Stable)
        .map(|(i, r)| {
            let lo = if i == 0 { domain.0 } else { xs[i - 1] };
            let hi = if i + 1 == xs.len() { domain.1 } else { xs[i + 1] };
            Basin1d {
                attractor: r.eta[0],
                lo,
                hi,
                width: hi - lo,
            }
        })
        .collect();
    Ok(Basins1d { separators, basins })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CycleOptions {
    /// Largest accepted distance between consecutive section returns,
    /// relative to the attractor diameter.
    pub cycle_tol: f64,
    /// Speeds below this (relative to `max(1, |eta|)`) count as a fixed point.
    pub rest_tol: f64,
}

impl Default for CycleOptions {
    fn default() -> Self {
        Self {
            cycle_tol: 1e-3,
            rest_tol: 1e-9,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LimitCycle {
    pub period: f64,
    pub frequency: f64,
    /// Half peak-to-peak excursion per coordinate.
    pub amplitude: Vec<f64>,
    pub samples: Vec<Vec<f64>>,
    pub section_point: Vec<f64>,
    pub section_normal: Vec<f64>,
    pub return_displacement: f64,
    pub n_returns: usize,
}

/// Integrates to the attractor and measures the period of a planar limit
/// cycle with a Poincare section through the point of maximum speed,
/// normal to the flow. Returns `None` on convergence to rest or when the
/// section returns have not settled.
pub fn detect_limit_cycle<F: VectorField + ?Sized>(
    field: &F,
    eta0: &DVector<f64>,
    dt: f64,
    t_max: f64,
    opts: &CycleOptions,
) -> Result<Option<LimitCycle>> {
    if field.dim() != 2 {
        return Err(Error::Validation("limit-cycle detection needs a planar field".into()));
    }
    let u = DVector::zeros(field.n_inputs());
    let tr = simulate_reduced_field(field, None, eta0, dt, t_max)?;
    let n = tr.len();
    let last = tr.last();
    if field.eval(last, &u).norm() < opts.rest_tol * last.norm().max(1.0) {
        return Ok(None);
    }
    let half = n / 2;
    let tail = &tr.states[half..];
    let speeds: Vec<f64> = tail.iter().map(|x| field.eval(x, &u).norm()).collect();
    let (imax, _) = speeds
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc });
    let p = tail[imax].clone();
    let normal = field.eval(&p, &u).normalize();
    let (mut lo, mut hi) = (tail[0].clone(), tail[0].clone());
    for x in tail {
        lo = lo.inf(x);
        hi = hi.sup(x);
    }
    let diameter = (&hi - &lo).norm();
    if diameter == 0.0 {
        return Ok(None);
    }
    let mut crossings: Vec<(f64, DVector<f64>, usize)> = Vec::new();
    for k in half..n - 1 {
        let s0 = (&tr.states[k] - &p).dot(&normal);
        let s1 = (&tr.states[k + 1] - &p).dot(&normal);
        if s0 < 0.0 && s1 >= 0.0 && (&tr.states[k] - &p).norm() < 0.5 * diameter {
            let theta = s0 / (s0 - s1);
            let t = tr.times[k] + theta * (tr.times[k + 1] - tr.times[k]);
            let x = &tr.states[k] + (&tr.states[k + 1] - &tr.states[k]) * theta;
            crossings.push((t, x, k));
        }
    }
    if crossings.len() < 3 {
        return Ok(None);
    }
    let (t1, x1, k1) = &crossings[crossings.len() - 1];
    let (t0, x0, k0) = &crossings[crossings.len() - 2];
    let displacement = (x1 - x0).norm();
    if displacement > opts.cycle_tol * diameter {
        return Ok(None);
    }
    let period = t1 - t0;
    let samples: Vec<Vec<f64>> = tr.states[k0 + 1..=*k1].iter().map(|x| x.iter().copied().collect()).collect();
    let amplitude = (0..2)
        .map(|j| {
            let (mn, mx) = samples
                .iter()
                .fold((f64::INFINITY, f64::NEG_INFINITY), |a, s| (a.0.min(s[j]), a.1.max(s[j])));
            0.5 * (mx - mn)
        })
        .collect();
    Ok(Some(LimitCycle {
        period,
        frequency: 1.0 / period,
        amplitude,
        samples,
        section_point: p.iter().copied().collect(),
        section_normal: normal.iter().copied().collect(),
        return_displacement: displacement,
        n_returns: crossings.len(),
    }))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BranchStatus {
    Connected,
    Escapes,
    Unresolved,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeteroclinicBranch {
    /// Index into the fixed-point list.
    pub source: usize,
    pub target: Option<usize>,
    /// Side of the unstable eigenvector (+1 or -1).
    pub side: i8,
    pub status: BranchStatus,
    pub polyline: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeteroclinicReport {
    pub branches: Vec<HeteroclinicBranch>,
    pub is_loop: bool,
    pub loop_polyline: Option<Vec<Vec<f64>>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeteroclinicOptions {
    pub eps: f64,
    pub tol: f64,
    pub dt: f64,
    pub t_max: f64,
}

impl Default for HeteroclinicOptions {
    fn default() -> Self {
        Self {
            eps: 1e-4,
            tol: 1e-4,
            dt: 1e-3,
            t_max: 200.0,
        }
    }
}

/// Follows both sides of the one-dimensional unstable manifold of every
/// fixed point that has exactly one unstable direction, and classifies each
/// branch by where it ends.
pub fn detect_heteroclinic<F: VectorField + ?Sized>(
    field: &F,
    fixed_points: &[ReducedFixedPoint],
    domain: &[(f64, f64)],
    opts: &HeteroclinicOptions,
) -> Result<HeteroclinicReport> {
    if field.dim() != 2 {
        return Err(Error::Validation("heteroclinic detection needs a planar field".into()));
    }
    check_box(2, domain)?;
    let u = DVector::zeros(field.n_inputs());
    let stable: Vec<usize> = (0..fixed_points.len())
        .filter(|&i| fixed_points[i].stability == Stability::Stable)
        .collect();
    let mut branches = Vec::new();
    for (src, fp) in fixed_points.iter().enumerate() {
        let (values, vectors) = eigen(&field.eval_jacobian(&fp.eta, &u))?;
        let unstable: Vec<usize> = (0..values.len()).filter(|&i| values[i].re > 0.0).collect();
        if unstable.len() != 1 || values[unstable[0]].im != 0.0 {
            continue;
        }
        let dir = DVector::from_iterator(2, vectors[unstable[0]].iter().map(|z| z.re)).normalize();
        for side in [1i8, -1] {
            let mut x = &fp.eta + &dir * (opts.eps * side as f64);
            let mut poly = vec![fp.eta.iter().copied().collect::<Vec<f64>>(), x.iter().copied().collect()];
            let steps = (opts.t_max / opts.dt).ceil() as usize;
            let mut status = BranchStatus::Unresolved;
            let mut target = None;
            for _ in 0..steps {
                x = rk4_step(field, &x, &u, opts.dt, None);
                if !x.iter().all(|v| v.is_finite())
                    || x.iter().zip(domain).any(|(v, &(lo, hi))| *v < lo || *v > hi)
                {
                    status = BranchStatus::Escapes;
                    break;
                }
                poly.push(x.iter().copied().collect());
                if let Some(&t) = stable.iter().find(|&&t| (&x - &fixed_points[t].eta).norm() < opts.tol) {
                    poly.push(fixed_points[t].eta.iter().copied().collect());
                    status = BranchStatus::Connected;
                    target = Some(t);
                    break;
                }
            }
            branches.push(HeteroclinicBranch {
                source: src,
                target,
                side,
                status,
                polyline: poly,
            });
        }
    }
    let loop_polyline = chain_loop(&branches);
    Ok(HeteroclinicReport {
        is_loop: loop_polyline.is_some(),
        branches,
        loop_polyline,
    })
}

/// Joins the branches into one closed curve when they form a single cycle.
fn chain_loop(branches: &[HeteroclinicBranch]) -> Option<Vec<Vec<f64>>> {
    if branches.is_empty() || branches.iter().any(|b| b.status != BranchStatus::Connected) {
        return None;
    }
    let edges: Vec<(usize, usize)> = branches.iter().map(|b| (b.source, b.target.unwrap())).collect();
    let mut degree = std::collections::HashMap::new();
    for &(a, b) in &edges {
        *degree.entry(a).or_insert(0) += 1;
        *degree.entry(b).or_insert(0) += 1;
    }
    if degree.values().any(|&k| k != 2) {
        return None;
    }
    let mut used = vec![false; edges.len()];
    let mut out: Vec<Vec<f64>> = Vec::new();
    let start = edges[0].0;
    let mut at = start;
    for _ in 0..edges.len() {
        let (i, forward) = edges
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .find_map(|(i, &(a, b))| {
                if a == at {
                    Some((i, true))
                } else if b == at {
                    Some((i, false))
                } else {
                    None
                }
            })?;
        used[i] = true;
        let mut poly = branches[i].polyline.clone();
        if !forward {
            poly.reverse();
        }
        if !out.is_empty() {
            poly.remove(0);
        }
        out.extend(poly);
        at = if forward { edges[i].1 } else { edges[i].0 };
    }
    (at == start && used.iter().all(|&u| u)).then_some(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::GenericSystem;
    use crate::monomials::MonomialBasis;
    use crate::reduced::ReducedModel;
    use nalgebra::DMatrix;

    fn poly1d(c: &[f64]) -> ReducedModel {
        ReducedModel::new(MonomialBasis::new(1, 0, c.len() as u32 - 1), DMatrix::from_row_slice(1, c.len(), c)).unwrap()
    }

    fn hopf(f0: f64) -> GenericSystem {
        GenericSystem::new(2, 0, move |x: &DVector<f64>, _u: &DVector<f64>| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            let w = 2.0 * std::f64::consts::PI * f0;
            DVector::from_vec(vec![x[0] * (1.0 - r2) - w * x[1], x[1] * (1.0 - r2) + w * x[0]])
        })
    }

    pub(crate) fn ring() -> GenericSystem {
        GenericSystem::new(2, 0, |x: &DVector<f64>, _u: &DVector<f64>| {
            let r = x.norm();
            if r == 0.0 {
                return DVector::zeros(2);
            }
            DVector::from_vec(vec![
                (1.0 - r) * x[0] + x[1] * x[1] / r,
                (1.0 - r) * x[1] - x[0] * x[1] / r,
            ])
        })
    }

    #[test]
    fn bistable_roots() {
        let r = reduced_fixed_points(&poly1d(&[0.0, 1.0, 0.0, -1.0]), &[(-2.0, 2.0)], &Default::default()).unwrap();
        let xs: Vec<f64> = r.iter().map(|p| p.eta[0]).collect();
        assert_eq!(xs.len(), 3);
        for (x, e) in xs.iter().zip([-1.0, 0.0, 1.0]) {
            assert!((x - e).abs() < 1e-12);
        }
        let st: Vec<_> = r.iter().map(|p| p.stability).collect();
        assert_eq!(st, vec![Stability::Stable, Stability::Unstable, Stability::Stable]);
    }

    #[test]
    fn decay_has_one_stable_root() {
        let r = reduced_fixed_points(&poly1d(&[0.0, -1.0]), &[(-1.0, 1.0)], &Default::default()).unwrap();
        assert_eq!(r.len(), 1);
        assert_eq!(r[0].stability, Stability::Stable);
        assert!(r[0].eta[0].abs() < 1e-12);
    }

    #[test]
    fn planar_roots_by_multistart() {
        let f = GenericSystem::new(2, 0, |x: &DVector<f64>, _u: &DVector<f64>| {
            DVector::from_vec(vec![x[0] - x[0].powi(3), -x[1]])
        });
        let r = reduced_fixed_points(&f, &[(-2.0, 2.0), (-1.0, 1.0)], &Default::default()).unwrap();
        assert_eq!(r.len(), 3);
        assert_eq!(r[1].stability, Stability::Unstable);
    }

    #[test]
    fn basins_symmetric_and_shifted() {
        let b = basin_widths_1d(&poly1d(&[0.0, 1.0, 0.0, -1.0]), (-2.0, 2.0), &Default::default()).unwrap();
        assert_eq!(b.separators.len(), 1);
        assert!(b.separators[0].abs() < 1e-12);
        assert!((b.basins[0].width - 2.0).abs() < 1e-12 && (b.basins[1].width - 2.0).abs() < 1e-12);
        // (e - 0.3) - (e - 0.3)^3 expanded
        let c = 0.3f64;
        let shifted = poly1d(&[-c + c.powi(3), 1.0 - 3.0 * c * c, 3.0 * c, -1.0]);
        let b = basin_widths_1d(&shifted, (-2.0, 2.0), &Default::default()).unwrap();
        assert!((b.separators[0] - 0.3).abs() < 1e-10);
        assert!(basin_widths_1d(&poly1d(&[0.0, 1.0]), (-1.0, 1.0), &Default::default()).is_err());
    }

    #[test]
    fn hopf_frequency() {
        let f = hopf(1.9);
        let c = detect_limit_cycle(&f, &DVector::from_vec(vec![0.1, 0.0]), 1e-3, 40.0, &Default::default())
            .unwrap()
            .unwrap();
        assert!((c.frequency - 1.9).abs() < 1e-3, "{}", c.frequency);
        assert!((c.amplitude[0] - 1.0).abs() < 1e-3);
        let c2 = detect_limit_cycle(&f, &DVector::from_vec(vec![0.1, 0.0]), 1e-3, 80.0, &Default::default())
            .unwrap()
            .unwrap();
        assert!((c2.frequency - c.frequency).abs() < 1e-6);
    }

    #[test]
    fn decay_has_no_cycle() {
        let f = GenericSystem::new(2, 0, |x: &DVector<f64>, _u: &DVector<f64>| -x);
        assert!(detect_limit_cycle(&f, &DVector::from_vec(vec![1.0, 0.5]), 1e-2, 50.0, &Default::default())
            .unwrap()
            .is_none());
    }

    #[test]
    fn ring_loop_is_unit_circle() {
        let f = ring();
        let fps = reduced_fixed_points(&f, &[(-1.5, 1.5), (-1.5, 1.5)], &Default::default()).unwrap();
        let rep = detect_heteroclinic(&f, &fps, &[(-1.5, 1.5), (-1.5, 1.5)], &Default::default()).unwrap();
        assert_eq!(rep.branches.len(), 2);
        assert!(rep.branches.iter().all(|b| b.status == BranchStatus::Connected));
        assert!(rep.is_loop);
        let poly = rep.loop_polyline.unwrap();
        let off = poly.iter().map(|p| ((p[0] * p[0] + p[1] * p[1]).sqrt() - 1.0).abs()).fold(0.0, f64::max);
        assert!(off < 1e-3, "{off}");
    }

    #[test]
    fn gradient_field_has_no_branches() {
        let f = GenericSystem::new(2, 0, |x: &DVector<f64>, _u: &DVector<f64>| x * (-4.0 * x.norm_squared()));
        let fps = vec![classify(&f, DVector::zeros(2), 1e-8).unwrap()];
        let rep = detect_heteroclinic(&f, &fps, &[(-1.0, 1.0), (-1.0, 1.0)], &Default::default()).unwrap();
        assert!(rep.branches.is_empty() && !rep.is_loop);
    }
}
