//! Anchor trajectories and time-dependent SSM coefficients under small,
//! bounded, aperiodic forcing.
//!
//! Every convolution `int e^{D (t - s)} g(s) ds` is evaluated in the
//! realified eigenbasis, split into a stable block (integrated forward from
//! the past) and an unstable block (integrated backward from the future).
//! Within each grid step the kernel is propagated exactly; the source is
//! either held constant (recorded forcing) or interpolated linearly.

use crate::error::{Error, Result};
use crate::linalg::exp_phi;
use crate::model::VectorField;
use crate::simulate::Trajectory;
use crate::steady::SpectralDecomposition;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Kernel values below this are truncated when reporting the valid window.
pub const KERNEL_CUTOFF: f64 = 1e-12;

/// Piecewise-constant forcing `eps * f1(t)` on a uniform grid.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForcingRecord {
    /// Grid nodes `t_0 < .. < t_n`.
    pub times: Vec<f64>,
    /// `f1` on each step `[t_k, t_{k+1})`.
    pub values: Vec<Vec<f64>>,
    pub epsilon: f64,
}

impl ForcingRecord {
    pub fn new(times: Vec<f64>, values: Vec<DVector<f64>>, epsilon: f64) -> Result<Self> {
        if times.len() < 2 || values.len() + 1 != times.len() {
            return Err(Error::Validation(format!(
                "forcing needs one value per step: {} nodes, {} values",
                times.len(),
                values.len()
            )));
        }
        uniform_step(&times)?;
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::Validation("forcing amplitude must be positive".into()));
        }
        let dim = values[0].len();
        if values.iter().any(|v| v.len() != dim) {
            return Err(Error::Validation("forcing values have mixed dimensions".into()));
        }
        if values.iter().any(|v| !v.iter().all(|x| x.is_finite())) {
            return Err(Error::Validation("forcing values must be finite".into()));
        }
        Ok(Self {
            times,
            values: values.iter().map(|v| v.iter().copied().collect()).collect(),
            epsilon,
        })
    }

    /// The forcing logged by a noisy integration, divided by `epsilon`.
    pub fn from_trajectory(traj: &Trajectory, epsilon: f64) -> Result<Self> {
        let forcing = traj
            .forcing
            .as_ref()
            .ok_or_else(|| Error::Validation("trajectory carries no forcing record".into()))?;
        Self::new(
            traj.times.clone(),
            forcing.iter().map(|f| f / epsilon).collect(),
            epsilon,
        )
    }

    /// Constant `f1 = c` on `n` steps of size `dt` from `t = 0`.
    pub fn constant(c: DVector<f64>, epsilon: f64, dt: f64, n: usize) -> Result<Self> {
        Self::new((0..=n).map(|k| k as f64 * dt).collect(), vec![c; n], epsilon)
    }

    pub fn dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn dt(&self) -> f64 {
        self.times[1] - self.times[0]
    }

    pub fn value(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.values[k])
    }

    pub fn sup_norm(&self) -> f64 {
        self.values
            .iter()
            .flat_map(|v| v.iter())
            .fold(0.0, |a, x| a.max(x.abs()))
    }
}

fn uniform_step(times: &[f64]) -> Result<f64> {
    let dt = times[1] - times[0];
    if !(dt > 0.0) || times.windows(2).any(|w| ((w[1] - w[0]) - dt).abs() > 1e-6 * dt) {
        return Err(Error::Validation("forcing grid must be uniform and increasing".into()));
    }
    Ok(dt)
}

struct Propagator {
    idx: Vec<usize>,
    e: DMatrix<f64>,
    p1: DMatrix<f64>,
    p2: DMatrix<f64>,
    /// `-D^-1` restricted to the block, the response to a constant source.
    steady: DMatrix<f64>,
    horizon: f64,
}

impl Propagator {
    fn new(d: &DMatrix<f64>, idx: Vec<usize>, rates: &[f64], h: f64, backward: bool) -> Result<Option<Self>> {
        if idx.is_empty() {
            return Ok(None);
        }
        let block = d.select_rows(&idx).select_columns(&idx);
        let signed = if backward { -&block } else { block.clone() };
        let (e, p1, p2) = exp_phi(&signed, h);
        let steady = -block
            .try_inverse()
            .ok_or_else(|| Error::HorizonOverflow(0.0))?;
        let slowest = idx.iter().map(|&i| rates[i].abs()).fold(f64::INFINITY, f64::min);
        Ok(Some(Self {
            idx,
            e,
            p1,
            p2,
            steady,
            horizon: -KERNEL_CUTOFF.ln() / slowest,
        }))
    }
}

/// Bounded solution operator of `z' = D z + g(t)` for a block-diagonal
/// real matrix `D` with no real parts near zero.
pub struct SplitKernel {
    n: usize,
    stable: Option<Propagator>,
    unstable: Option<Propagator>,
}

impl SplitKernel {
    /// `rates[i]` is the real part belonging to row `i` of `d`; conjugate
    /// pairs must share a sign.
    pub fn new(d: &DMatrix<f64>, rates: &[f64], dt: f64, hyperbolicity_tol: f64) -> Result<Self> {
        let n = d.nrows();
        if rates.len() != n {
            return Err(Error::dims("kernel rates", n, rates.len()));
        }
        if let Some(&r) = rates.iter().find(|r| r.abs() <= hyperbolicity_tol) {
            return Err(Error::HorizonOverflow(r));
        }
        let st: Vec<usize> = (0..n).filter(|&i| rates[i] < 0.0).collect();
        let un: Vec<usize> = (0..n).filter(|&i| rates[i] > 0.0).collect();
        let kernel = Self {
            n,
            stable: Propagator::new(d, st, rates, dt, false)?,
            unstable: Propagator::new(d, un, rates, dt, true)?,
        };
        for p in [&kernel.stable, &kernel.unstable].into_iter().flatten() {
            if !p.horizon.is_finite() {
                return Err(Error::HorizonOverflow(0.0));
            }
        }
        Ok(kernel)
    }

    /// Length of the start-up (stable) and wind-down (unstable) stretches.
    pub fn horizons(&self) -> (f64, f64) {
        (
            self.stable.as_ref().map_or(0.0, |p| p.horizon),
            self.unstable.as_ref().map_or(0.0, |p| p.horizon),
        )
    }

    /// Response to a source held constant on each step (`n` values for
    /// `n + 1` nodes). The source before the record and after it is taken
    /// equal to its first and last value.
    pub fn convolve_steps(&self, g: &[DVector<f64>]) -> Vec<DVector<f64>> {
        self.run(g.len() + 1, |k| g[k].clone(), |k| g[k].clone(), false)
    }

    /// Response to a source given at the nodes and linear in between.
    pub fn convolve_nodes(&self, g: &[DVector<f64>]) -> Vec<DVector<f64>> {
        self.run(g.len(), |k| g[k].clone(), |k| g[k + 1].clone(), true)
    }

    fn run(
        &self,
        nodes: usize,
        left: impl Fn(usize) -> DVector<f64>,
        right: impl Fn(usize) -> DVector<f64>,
        linear: bool,
    ) -> Vec<DVector<f64>> {
        let mut out = vec![DVector::zeros(self.n); nodes];
        let steps = nodes - 1;
        if let Some(p) = &self.stable {
            let pick = |v: &DVector<f64>| v.select_rows(&p.idx);
            let mut z = &p.steady * pick(&left(0));
            for (k, slot) in out.iter_mut().enumerate() {
                for (r, &i) in p.idx.iter().enumerate() {
                    slot[i] = z[r];
                }
                if k == steps {
                    break;
                }
                let (a, b) = (pick(&left(k)), pick(&right(k)));
                z = &p.e * &z
                    + if linear {
                        &p.p1 * &a + &p.p2 * (b - &a)
                    } else {
                        &p.p1 * a
                    };
            }
        }
        if let Some(p) = &self.unstable {
            let pick = |v: &DVector<f64>| v.select_rows(&p.idx);
            let last = if linear { right(steps - 1) } else { left(steps - 1) };
            let mut z = &p.steady * pick(&last);
            for k in (0..nodes).rev() {
                for (r, &i) in p.idx.iter().enumerate() {
                    out[k][i] = z[r];
                }
                if k == 0 {
                    break;
                }
                let (a, b) = (pick(&left(k - 1)), pick(&right(k - 1)));
                z = &p.e * &z
                    - if linear {
                        &p.p1 * &b + &p.p2 * (a - &b)
                    } else {
                        &p.p1 * a
                    };
            }
        }
        out
    }
}

/// Exact block-diagonal form of a realified spectrum.
fn block_matrix(spec: &SpectralDecomposition) -> DMatrix<f64> {
    let n = spec.dim();
    let mut d = DMatrix::zeros(n, n);
    let mut j = 0;
    while j < n {
        let l = spec.eigenvalues[j];
        if spec.pair_starts_at(j) {
            d[(j, j)] = l.re;
            d[(j + 1, j + 1)] = l.re;
            d[(j, j + 1)] = l.im;
            d[(j + 1, j)] = -l.im;
            j += 2;
        } else {
            d[(j, j)] = l.re;
            j += 1;
        }
    }
    d
}

/// Expansion `y*(t) = sum_nu eps^nu y_nu(t)` of the anchor trajectory
/// around a hyperbolic fixed point.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorExpansion {
    pub times: Vec<f64>,
    pub epsilon: f64,
    #[serde(with = "crate::io::plain_vec")]
    pub x0: DVector<f64>,
    /// `orders[nu - 1][k]` is `y_nu(t_k)`.
    pub orders: Vec<Vec<Vec<f64>>>,
    /// Interval where truncation of the improper integrals is below the cutoff.
    pub valid_window: (f64, f64),
    /// `sup |y_nu| / sup |f1|^nu` per order.
    pub bound_constants: Vec<f64>,
}

impl AnchorExpansion {
    pub fn order(&self) -> usize {
        self.orders.len()
    }

    pub fn term(&self, nu: usize, k: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.orders[nu - 1][k])
    }

    /// `x0 + sum_{nu <= order} eps^nu y_nu(t_k)`.
    pub fn composite(&self, order: usize, k: usize) -> DVector<f64> {
        let mut x = self.x0.clone();
        for nu in 1..=order.min(self.order()) {
            x.axpy(self.epsilon.powi(nu as i32), &self.term(nu, k), 1.0);
        }
        x
    }

    /// Grid indices inside the valid window.
    pub fn valid_indices(&self) -> Vec<usize> {
        let (lo, hi) = self.valid_window;
        (0..self.times.len())
            .filter(|&k| self.times[k] >= lo && self.times[k] <= hi)
            .collect()
    }
}

/// Substeps per forcing step used by [`anchor_expansion`].
pub const ANCHOR_SUBSTEPS: usize = 16;

/// Linear-response machinery at one hyperbolic fixed point.
///
/// Responses live on a grid with `substeps` nodes per forcing step, so
/// `n` forcing values give `n * substeps + 1` nodes.
pub struct AnchorSolver {
    pub spec: SpectralDecomposition,
    kernel: SplitKernel,
    dt: f64,
    substeps: usize,
}

impl AnchorSolver {
    pub fn new(spec: SpectralDecomposition, dt: f64, hyperbolicity_tol: f64) -> Result<Self> {
        Self::with_substeps(spec, dt, 1, hyperbolicity_tol)
    }

    pub fn with_substeps(spec: SpectralDecomposition, dt: f64, substeps: usize, hyperbolicity_tol: f64) -> Result<Self> {
        if substeps == 0 {
            return Err(Error::Validation("anchor solver needs at least one substep".into()));
        }
        let d = block_matrix(&spec);
        let kernel = SplitKernel::new(&d, &spec.real_parts(), dt / substeps as f64, hyperbolicity_tol)?;
        Ok(Self {
            spec,
            kernel,
            dt,
            substeps,
        })
    }

    /// Every `substeps`-th node of a solver grid, i.e. the forcing grid.
    pub fn coarsen(&self, fine: &[DVector<f64>]) -> Vec<DVector<f64>> {
        fine.iter().step_by(self.substeps).cloned().collect()
    }

    fn to_modal(&self, v: &DVector<f64>) -> DVector<f64> {
        &self.spec.realizer_inverse * v
    }

    fn from_modal(&self, z: Vec<DVector<f64>>) -> Vec<DVector<f64>> {
        z.into_iter().map(|v| &self.spec.realizer * v).collect()
    }

    fn check_grid(&self, forcing: &ForcingRecord) -> Result<()> {
        if forcing.dim() != self.spec.dim() {
            return Err(Error::dims("forcing", self.spec.dim(), forcing.dim()));
        }
        if (forcing.dt() - self.dt).abs() > 1e-9 * self.dt {
            return Err(Error::Validation("forcing grid does not match the solver step".into()));
        }
        Ok(())
    }

    /// `y_1`: bounded response to `f1`.
    pub fn order1(&self, forcing: &ForcingRecord) -> Result<Vec<DVector<f64>>> {
        self.check_grid(forcing)?;
        let g: Vec<DVector<f64>> = (0..forcing.values.len())
            .flat_map(|k| std::iter::repeat_n(self.to_modal(&forcing.value(k)), self.substeps))
            .collect();
        Ok(self.from_modal(self.kernel.convolve_steps(&g)))
    }

    /// Bounded response to a source sampled at the grid nodes.
    pub fn respond(&self, source: &[DVector<f64>]) -> Vec<DVector<f64>> {
        let g: Vec<DVector<f64>> = source.iter().map(|s| self.to_modal(s)).collect();
        self.from_modal(self.kernel.convolve_nodes(&g))
    }

    /// `y_2` from the source `1/2 D^2 f0 [y1, y1]`.
    pub fn order2<D2>(&self, y1: &[DVector<f64>], d2: D2) -> Result<Vec<DVector<f64>>>
    where
        D2: Fn(&DVector<f64>, &DVector<f64>) -> Option<DVector<f64>>,
    {
        let src = y1
            .iter()
            .map(|y| d2(y, y).map(|v| v * 0.5))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(unsupported)?;
        Ok(self.respond(&src))
    }

    /// `y_3` from the source `1/6 D^3 f0 [y1, y1, y1] + D^2 f0 [y1, y2]`.
    pub fn order3<D2, D3>(&self, y1: &[DVector<f64>], y2: &[DVector<f64>], d2: D2, d3: D3) -> Result<Vec<DVector<f64>>>
    where
        D2: Fn(&DVector<f64>, &DVector<f64>) -> Option<DVector<f64>>,
        D3: Fn(&DVector<f64>, &DVector<f64>, &DVector<f64>) -> Option<DVector<f64>>,
    {
        if y1.len() != y2.len() {
            return Err(Error::dims("anchor grid", y1.len(), y2.len()));
        }
        let src = y1
            .iter()
            .zip(y2)
            .map(|(a, b)| Some(d3(a, a, a)? / 6.0 + d2(a, b)?))
            .collect::<Option<Vec<_>>>()
            .ok_or_else(unsupported)?;
        Ok(self.respond(&src))
    }

    pub fn horizons(&self) -> (f64, f64) {
        self.kernel.horizons()
    }
}

fn unsupported() -> Error {
    Error::Unsupported("higher-order anchors need analytic derivative tensors of the field".into())
}

/// Anchor expansion up to `order` (1 to 3) for `x' = f(x, u) + eps f1(t)`
/// around the fixed point `x0`.
pub fn anchor_expansion<F: VectorField + ?Sized>(
    field: &F,
    x0: &DVector<f64>,
    u: &DVector<f64>,
    forcing: &ForcingRecord,
    order: usize,
) -> Result<AnchorExpansion> {
    if !(1..=3).contains(&order) {
        return Err(Error::Validation(format!("anchor order must be 1, 2 or 3, got {order}")));
    }
    let spec = SpectralDecomposition::new(&field.eval_jacobian(x0, u))?;
    let solver = AnchorSolver::with_substeps(spec, forcing.dt(), ANCHOR_SUBSTEPS, 1e-8)?;
    let d2 = |a: &DVector<f64>, b: &DVector<f64>| field.second_derivative(x0, u, a, b);
    let d3 = |a: &DVector<f64>, b: &DVector<f64>, c: &DVector<f64>| field.third_derivative(x0, u, a, b, c);
    let y1 = solver.order1(forcing)?;
    let mut orders = vec![y1];
    if order >= 2 {
        let y2 = solver.order2(&orders[0], d2)?;
        orders.push(y2);
    }
    if order >= 3 {
        let y3 = solver.order3(&orders[0], &orders[1], d2, d3)?;
        orders.push(y3);
    }
    let (hs, hu) = solver.horizons();
    // each order reuses the previous one, so the start-up stretch compounds
    let lo = forcing.times[0] + hs * order as f64;
    let hi = forcing.times[forcing.times.len() - 1] - hu * order as f64;
    let fsup = forcing.sup_norm();
    let bound_constants = orders
        .iter()
        .enumerate()
        .map(|(i, ys)| {
            let s = ys.iter().map(|y| y.amax()).fold(0.0, f64::max);
            if fsup > 0.0 {
                s / fsup.powi(i as i32 + 1)
            } else {
                0.0
            }
        })
        .collect();
    Ok(AnchorExpansion {
        times: forcing.times.clone(),
        epsilon: forcing.epsilon,
        x0: x0.clone(),
        orders: orders
            .iter()
            .map(|ys| solver.coarsen(ys).into_iter().map(|y| y.iter().copied().collect()).collect())
            .collect(),
        valid_window: (lo, hi),
        bound_constants,
    })
}

/// Coefficients of `v = h20 u^2 + eps h11(t) u` for the slowest
/// one-dimensional SSM in the realified eigen-coordinates `(u, v)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeDependentSsmCoeffs {
    pub lambda1: f64,
    /// Index of the slow direction in the sorted spectrum.
    pub slow_index: usize,
    /// Indices of the `v` coordinates.
    pub v_indices: Vec<usize>,
    #[serde(with = "crate::io::plain_vec")]
    pub h20: DVector<f64>,
    pub h11: Vec<Vec<f64>>,
    pub times: Vec<f64>,
    pub epsilon: f64,
    pub valid_window: (f64, f64),
}

impl TimeDependentSsmCoeffs {
    pub fn h11_at(&self, k: usize) -> DVector<f64> {
        DVector::from_column_slice(&self.h11[k])
    }
}

/// `h20` and `h11(t)` of the time-dependent slowest SSM at a fixed point.
///
/// `h20 = -(A_v - 2 lambda1)^-1 [T^-1 1/2 D^2 f0 (e1, e1)]_v` and `h11` is
/// the bounded solution of `h' = (A_v - lambda1) h + [T^-1 D^2 f0 (y1(t), e1)]_v`.
pub fn td_ssm_coeffs<F: VectorField + ?Sized>(
    field: &F,
    x0: &DVector<f64>,
    u: &DVector<f64>,
    slow_index: Option<usize>,
    forcing: &ForcingRecord,
    y1: &[DVector<f64>],
) -> Result<TimeDependentSsmCoeffs> {
    let spec = SpectralDecomposition::new(&field.eval_jacobian(x0, u))?;
    let n = spec.dim();
    let j1 = slow_index.unwrap_or(0);
    if j1 >= n {
        return Err(Error::Validation(format!("slow index {j1} out of range")));
    }
    if spec.eigenvalues[j1].im != 0.0 {
        return Err(Error::Unsupported(
            "time-dependent coefficients are implemented for a real slowest eigenvalue".into(),
        ));
    }
    if y1.len() != forcing.times.len() {
        return Err(Error::dims("first-order anchor grid", forcing.times.len(), y1.len()));
    }
    let lambda1 = spec.eigenvalues[j1].re;
    let e1 = spec.realizer.column(j1).into_owned();
    let v_idx: Vec<usize> = (0..n).filter(|&i| i != j1).collect();
    let d = block_matrix(&spec);
    let a_v = d.select_rows(&v_idx).select_columns(&v_idx);
    let rates: Vec<f64> = v_idx.iter().map(|&i| spec.eigenvalues[i].re).collect();
    let tinv_v = spec.realizer_inverse.select_rows(&v_idx);

    let d2 = |a: &DVector<f64>, b: &DVector<f64>| field.second_derivative(x0, u, a, b).ok_or_else(unsupported);
    let m20 = &tinv_v * d2(&e1, &e1)? * 0.5;
    let nv = v_idx.len();
    let a2 = &a_v - DMatrix::identity(nv, nv) * (2.0 * lambda1);
    let h20 = -a2.clone().lu().solve(&m20).ok_or_else(|| resonance(&rates, 2.0 * lambda1))?;
    if !h20.iter().all(|x| x.is_finite()) || a2.determinant().abs() < 1e-14 {
        return Err(resonance(&rates, 2.0 * lambda1));
    }

    let shifted: Vec<f64> = rates.iter().map(|r| r - lambda1).collect();
    if let Some(&r) = shifted.iter().find(|r| r.abs() < 1e-8) {
        return Err(resonance(&rates, r + lambda1));
    }
    let a1 = &a_v - DMatrix::identity(nv, nv) * lambda1;
    let kernel = SplitKernel::new(&a1, &shifted, forcing.dt(), 1e-8)?;
    let src = y1
        .iter()
        .map(|y| d2(y, &e1).map(|v| &tinv_v * v))
        .collect::<Result<Vec<_>>>()?;
    let h11 = kernel.convolve_nodes(&src);
    let (hs, hu) = kernel.horizons();
    Ok(TimeDependentSsmCoeffs {
        lambda1,
        slow_index: j1,
        v_indices: v_idx,
        h20,
        h11: h11.into_iter().map(|h| h.iter().copied().collect()).collect(),
        times: forcing.times.clone(),
        epsilon: forcing.epsilon,
        valid_window: (forcing.times[0] + hs, forcing.times[forcing.times.len() - 1] - hu),
    })
}

fn resonance(rates: &[f64], target: f64) -> Error {
    let (i, r) = rates
        .iter()
        .enumerate()
        .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
        .map(|(i, &r)| (i, r))
        .unwrap_or((0, f64::NAN));
    let mut mi = vec![0usize; rates.len()];
    if !mi.is_empty() {
        mi[i] = 1;
    }
    Error::Resonance {
        multi_index: mi,
        combination: target,
        eigenvalue: r,
    }
}
