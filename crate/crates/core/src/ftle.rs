//! Finite-time Lyapunov exponents on two-dimensional planes of phase space
//! and ridge extraction.

use crate::error::{Error, Result};
use crate::io::Table;
use crate::model::VectorField;
use crate::simulate::{rk4_step, DEFAULT_BLOWUP};
use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// Fraction of masked grid points above which the field carries a warning.
pub const MASK_WARNING_FRACTION: f64 = 0.5;

/// Grid of initial conditions `base + eta1 e1 + eta2 e2`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlaneSpec {
    #[serde(with = "crate::io::plain_vec")]
    pub base: DVector<f64>,
    pub basis: [Vec<f64>; 2],
    /// Grid sizes along `e1` and `e2`.
    pub n: [usize; 2],
    /// Coordinate ranges along `e1` and `e2`.
    pub extents: [(f64, f64); 2],
}

impl PlaneSpec {
    pub fn new(
        base: DVector<f64>,
        e1: DVector<f64>,
        e2: DVector<f64>,
        n: [usize; 2],
        extents: [(f64, f64); 2],
    ) -> Result<Self> {
        let p = Self {
            base,
            basis: [e1.iter().copied().collect(), e2.iter().copied().collect()],
            n,
            extents,
        };
        p.validate()?;
        Ok(p)
    }

    /// Plane spanned by two coordinate axes.
    pub fn axes(base: DVector<f64>, a: usize, b: usize, n: [usize; 2], extents: [(f64, f64); 2]) -> Result<Self> {
        let dim = base.len();
        if a >= dim || b >= dim {
            return Err(Error::Validation(format!("plane axes ({a}, {b}) out of range")));
        }
        let unit = |k| {
            let mut e = DVector::zeros(dim);
            e[k] = 1.0;
            e
        };
        Self::new(base, unit(a), unit(b), n, extents)
    }

    pub fn validate(&self) -> Result<()> {
        let dim = self.base.len();
        for b in &self.basis {
            if b.len() != dim {
                return Err(Error::dims("plane basis", dim, b.len()));
            }
        }
        let (e1, e2) = (self.e(0), self.e(1));
        let gram = [e1.dot(&e1) - 1.0, e2.dot(&e2) - 1.0, e1.dot(&e2)];
        if gram.iter().any(|g| !(g.abs() <= 1e-10)) {
            return Err(Error::Validation("plane basis must be orthonormal within 1e-10".into()));
        }
        if self.n.iter().any(|&k| k < 2) {
            return Err(Error::Validation("plane grid needs at least 2 points per axis".into()));
        }
        if self.extents.iter().any(|&(lo, hi)| !(hi > lo && lo.is_finite() && hi.is_finite())) {
            return Err(Error::Validation("plane extents must be finite and increasing".into()));
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.base.len()
    }

    pub fn e(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.basis[k])
    }

    pub fn spacing(&self, k: usize) -> f64 {
        let (lo, hi) = self.extents[k];
        (hi - lo) / (self.n[k] - 1) as f64
    }

    /// Plane coordinates of grid node `(i, j)`.
    pub fn coords(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.extents[0].0 + i as f64 * self.spacing(0),
            self.extents[1].0 + j as f64 * self.spacing(1),
        )
    }

    pub fn embed(&self, eta1: f64, eta2: f64) -> DVector<f64> {
        &self.base + self.e(0) * eta1 + self.e(1) * eta2
    }

    pub fn point(&self, i: usize, j: usize) -> DVector<f64> {
        let (a, b) = self.coords(i, j);
        self.embed(a, b)
    }

    /// Largest side length of the plotted region.
    pub fn extent(&self) -> f64 {
        self.extents.iter().map(|(lo, hi)| hi - lo).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FtleOptions {
    pub dt: f64,
    pub t0: f64,
    /// Signed integration time `t - t0`; negative values give backward FTLE.
    pub horizon: f64,
    /// Finite-difference step; `1e-4` times the plane extent when absent.
    pub fd_step: Option<f64>,
    pub blowup: f64,
}

impl FtleOptions {
    pub fn new(dt: f64, horizon: f64) -> Self {
        Self {
            dt,
            t0: 0.0,
            horizon,
            fd_step: None,
            blowup: DEFAULT_BLOWUP,
        }
    }

    pub fn with_fd_step(mut self, h: f64) -> Self {
        self.fd_step = Some(h);
        self
    }

    fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) || !(self.horizon != 0.0 && self.horizon.is_finite()) {
            return Err(Error::Validation("FTLE needs dt > 0 and a nonzero finite horizon".into()));
        }
        if let Some(h) = self.fd_step {
            if !(h > 0.0) {
                return Err(Error::Validation("finite-difference step must be positive".into()));
            }
        }
        Ok(())
    }
}

/// Flow map `x(t0) -> x(t0 + horizon)` with fixed-step RK4; `None` when
/// the trajectory leaves the blow-up ball or turns non-finite.
pub fn flow_map<F: VectorField + ?Sized>(
    field: &F,
    u: &DVector<f64>,
    x0: &DVector<f64>,
    horizon: f64,
    dt: f64,
    blowup: f64,
) -> Option<DVector<f64>> {
    let steps = ((horizon.abs() / dt).round() as usize).max(1);
    let h = horizon / steps as f64;
    let mut x = x0.clone();
    for _ in 0..steps {
        x = rk4_step(field, &x, u, h, None);
        if !(x.norm() <= blowup) {
            return None;
        }
    }
    Some(x)
}

/// Central-difference flow-map gradient along `dirs` at `x`: one full
/// state-space column per direction.
pub fn flow_map_gradient<F: VectorField + ?Sized>(
    field: &F,
    u: &DVector<f64>,
    x: &DVector<f64>,
    dirs: &[DVector<f64>],
    h: f64,
    opts: &FtleOptions,
) -> Option<DMatrix<f64>> {
    let mut cols = Vec::with_capacity(dirs.len());
    for e in dirs {
        let plus = flow_map(field, u, &(x + e * h), opts.horizon, opts.dt, opts.blowup)?;
        let minus = flow_map(field, u, &(x - e * h), opts.horizon, opts.dt, opts.blowup)?;
        cols.push((plus - minus) / (2.0 * h));
    }
    Some(DMatrix::from_columns(&cols))
}

/// Flow-map gradient restricted to the plane directions at grid node `idx`.
pub fn flow_map_gradient_on_plane<F: VectorField + ?Sized>(
    field: &F,
    u: &DVector<f64>,
    plane: &PlaneSpec,
    idx: (usize, usize),
    opts: &FtleOptions,
) -> Result<Option<DMatrix<f64>>> {
    plane.validate()?;
    opts.validate()?;
    if plane.dim() != field.dim() {
        return Err(Error::dims("plane base", field.dim(), plane.dim()));
    }
    if idx.0 >= plane.n[0] || idx.1 >= plane.n[1] {
        return Err(Error::Validation(format!("grid index {idx:?} out of range")));
    }
    let h = opts.fd_step.unwrap_or(1e-4 * plane.extent());
    Ok(flow_map_gradient(
        field,
        u,
        &plane.point(idx.0, idx.1),
        &[plane.e(0), plane.e(1)],
        h,
        opts,
    ))
}

/// `C = DF^T DF`.
pub fn cauchy_green(df: &DMatrix<f64>) -> DMatrix<f64> {
    df.tr_mul(df)
}

/// `log(lambda_max(C)) / (2 |T|)`; `None` when `C` is degenerate.
pub fn ftle_from_cauchy_green(c: &DMatrix<f64>, horizon: f64) -> Option<f64> {
    let sym = (c + c.transpose()) * 0.5;
    let lmax = SymmetricEigen::new(sym).eigenvalues.max();
    (lmax > 0.0 && lmax.is_finite()).then(|| lmax.ln() / (2.0 * horizon.abs()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FtleField {
    pub plane: PlaneSpec,
    pub horizon: (f64, f64),
    pub fd_step: f64,
    /// `values[i][j]` at plane node `(i, j)`; `None` where a probe diverged.
    pub values: Vec<Vec<Option<f64>>>,
    pub masked_fraction: f64,
    pub warning: Option<String>,
}

impl FtleField {
    pub fn get(&self, i: usize, j: usize) -> Option<f64> {
        self.values.get(i)?.get(j).copied().flatten()
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.plane.n[0], self.plane.n[1])
    }

    /// Rows `i,j,eta1,eta2,ftle,masked`.
    pub fn to_table(&self) -> Table {
        let mut t = Table::new(["i", "j", "eta1", "eta2", "ftle", "masked"]);
        let (n1, n2) = self.shape();
        for i in 0..n1 {
            for j in 0..n2 {
                let (a, b) = self.plane.coords(i, j);
                let v = self.get(i, j);
                t.push(vec![
                    i as f64,
                    j as f64,
                    a,
                    b,
                    v.unwrap_or(f64::NAN),
                    if v.is_some() { 0.0 } else { 1.0 },
                ]);
            }
        }
        t
    }
}

/// FTLE over every node of `plane`.
pub fn ftle_field<F: VectorField + ?Sized>(
    field: &F,
    u: &DVector<f64>,
    plane: &PlaneSpec,
    opts: &FtleOptions,
) -> Result<FtleField> {
    plane.validate()?;
    opts.validate()?;
    if plane.dim() != field.dim() {
        return Err(Error::dims("plane base", field.dim(), plane.dim()));
    }
    if u.len() != field.n_inputs() {
        return Err(Error::dims("input", field.n_inputs(), u.len()));
    }
    let h = opts.fd_step.unwrap_or(1e-4 * plane.extent());
    let dirs = [plane.e(0), plane.e(1)];
    let [n1, n2] = plane.n;
    let mut values = vec![vec![None; n2]; n1];
    let mut masked = 0usize;
    for (i, row) in values.iter_mut().enumerate() {
        for (j, slot) in row.iter_mut().enumerate() {
            *slot = flow_map_gradient(field, u, &plane.point(i, j), &dirs, h, opts)
                .and_then(|df| ftle_from_cauchy_green(&cauchy_green(&df), opts.horizon));
            if slot.is_none() {
                masked += 1;
            }
        }
    }
    let masked_fraction = masked as f64 / (n1 * n2) as f64;
    let warning = (masked_fraction > MASK_WARNING_FRACTION).then(|| {
        format!(
            "{:.1}% of FTLE probes diverged; the field is unreliable",
            100.0 * masked_fraction
        )
    });
    Ok(FtleField {
        plane: plane.clone(),
        horizon: (opts.t0, opts.t0 + opts.horizon),
        fd_step: h,
        values,
        masked_fraction,
        warning,
    })
}

/// Chain of grid nodes along an FTLE ridge.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ridge {
    pub chain_id: usize,
    pub cells: Vec<(usize, usize)>,
    pub points: Vec<(f64, f64)>,
}

/// Rows `chain,i,j,eta1,eta2`.
pub fn ridges_table(ridges: &[Ridge]) -> Table {
    let mut t = Table::new(["chain", "i", "j", "eta1", "eta2"]);
    for r in ridges {
        for (&(i, j), &(a, b)) in r.cells.iter().zip(&r.points) {
            t.push(vec![r.chain_id as f64, i as f64, j as f64, a, b]);
        }
    }
    t
}

const AXES: [(isize, isize); 4] = [(1, 0), (1, 1), (0, 1), (1, -1)];

/// Grid nodes above the `quantile` of finite values that are strict
/// maxima across the ridge, chained by 8-neighbourhood; chains with fewer
/// than 3 nodes are dropped.
///
/// The across-ridge direction is the most concave Hessian direction, or
/// the normal to the gradient where the Hessian is unavailable.
pub fn extract_ridges(field: &FtleField, quantile: f64) -> Result<Vec<Ridge>> {
    if !(0.0..=1.0).contains(&quantile) {
        return Err(Error::Validation(format!("quantile {quantile} outside [0, 1]")));
    }
    let (n1, n2) = field.shape();
    let mut finite: Vec<f64> = field.values.iter().flatten().flatten().copied().collect();
    if finite.is_empty() {
        return Ok(Vec::new());
    }
    finite.sort_by(f64::total_cmp);
    let pos = quantile * (finite.len() - 1) as f64;
    let (lo, frac) = (pos.floor() as usize, pos.fract());
    let threshold = finite[lo] + frac * (finite[(lo + 1).min(finite.len() - 1)] - finite[lo]);
    if finite[finite.len() - 1] - finite[0] <= 1e-12 * finite[finite.len() - 1].abs().max(1.0) {
        return Ok(Vec::new());
    }

    let at = |i: isize, j: isize| -> Option<f64> {
        if i < 0 || j < 0 || i as usize >= n1 || j as usize >= n2 {
            None
        } else {
            field.get(i as usize, j as usize)
        }
    };
    let mut marked = BTreeSet::new();
    for i in 0..n1 as isize {
        for j in 0..n2 as isize {
            let Some(f) = at(i, j) else { continue };
            if f < threshold {
                continue;
            }
            let strict = |(di, dj): (isize, isize)| match (at(i + di, j + dj), at(i - di, j - dj)) {
                (Some(a), Some(b)) => f > a && f > b,
                _ => false,
            };
            let ridge = match across_direction(&at, i, j) {
                Some(axis) => strict(axis),
                None => AXES.iter().any(|&a| strict(a)),
            };
            if ridge {
                marked.insert((i as usize, j as usize));
            }
        }
    }

    let mut ridges = Vec::new();
    let mut seen = BTreeSet::new();
    for &start in &marked {
        if !seen.insert(start) {
            continue;
        }
        let mut comp = vec![start];
        let mut k = 0;
        while k < comp.len() {
            let (i, j) = comp[k];
            for di in -1isize..=1 {
                for dj in -1isize..=1 {
                    let q = (i as isize + di, j as isize + dj);
                    if q.0 < 0 || q.1 < 0 {
                        continue;
                    }
                    let q = (q.0 as usize, q.1 as usize);
                    if marked.contains(&q) && seen.insert(q) {
                        comp.push(q);
                    }
                }
            }
            k += 1;
        }
        if comp.len() < 3 {
            continue;
        }
        let cells = order_chain(comp);
        ridges.push(Ridge {
            chain_id: ridges.len(),
            points: cells.iter().map(|&(i, j)| field.plane.coords(i, j)).collect(),
            cells,
        });
    }
    Ok(ridges)
}

/// Index-space axis closest to the across-ridge direction at `(i, j)`.
fn across_direction(at: &impl Fn(isize, isize) -> Option<f64>, i: isize, j: isize) -> Option<(isize, isize)> {
    let f = at(i, j)?;
    let d = |di, dj| Some((at(i + di, j + dj)?, at(i - di, j - dj)?));
    let dir = match (d(1, 0), d(0, 1), d(1, 1), d(1, -1)) {
        (Some((a, b)), Some((c, e)), Some((p, q)), Some((r, s))) => {
            let hxx = a - 2.0 * f + b;
            let hyy = c - 2.0 * f + e;
            let hxy = ((p + q) - (r + s)) / 4.0;
            let h = nalgebra::Matrix2::new(hxx, hxy, hxy, hyy);
            let eig = h.symmetric_eigen();
            let k = if eig.eigenvalues[0] <= eig.eigenvalues[1] { 0 } else { 1 };
            if eig.eigenvalues[k] < 0.0 {
                Some((eig.eigenvectors[(0, k)], eig.eigenvectors[(1, k)]))
            } else {
                None
            }
        }
        _ => None,
    };
    let (vx, vy) = match dir {
        Some(v) => v,
        None => {
            let gx = match (at(i + 1, j), at(i - 1, j)) {
                (Some(a), Some(b)) => (a - b) / 2.0,
                (Some(a), None) => a - f,
                (None, Some(b)) => f - b,
                _ => 0.0,
            };
            let gy = match (at(i, j + 1), at(i, j - 1)) {
                (Some(a), Some(b)) => (a - b) / 2.0,
                (Some(a), None) => a - f,
                (None, Some(b)) => f - b,
                _ => 0.0,
            };
            if gx == 0.0 && gy == 0.0 {
                return None;
            }
            (-gy, gx)
        }
    };
    let angle = vy.atan2(vx).rem_euclid(std::f64::consts::PI);
    let sector = ((angle / (std::f64::consts::PI / 4.0)).round() as usize) % 4;
    Some(AXES[sector])
}

/// Orders a connected set of cells into a walk starting at an extremity.
fn order_chain(mut cells: Vec<(usize, usize)>) -> Vec<(usize, usize)> {
    let dist = |a: (usize, usize), b: (usize, usize)| {
        let di = a.0 as f64 - b.0 as f64;
        let dj = a.1 as f64 - b.1 as f64;
        di * di + dj * dj
    };
    let far = |from: (usize, usize), cells: &[(usize, usize)]| {
        cells
            .iter()
            .copied()
            .max_by(|&a, &b| dist(from, a).total_cmp(&dist(from, b)).then(b.cmp(&a)))
            .unwrap()
    };
    let start = far(far(cells[0], &cells), &cells);
    let mut out = Vec::with_capacity(cells.len());
    let mut cur = start;
    cells.retain(|&c| c != start);
    out.push(start);
    while !cells.is_empty() {
        let (k, _) = cells
            .iter()
            .enumerate()
            .min_by(|a, b| dist(cur, *a.1).total_cmp(&dist(cur, *b.1)).then(a.1.cmp(b.1)))
            .unwrap();
        cur = cells.remove(k);
        out.push(cur);
    }
    out
}
