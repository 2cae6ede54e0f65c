//! Fixed-step RK4 integration with piecewise-constant inputs and bounded
//! Gaussian noise, ensembles and train/test splits.

use crate::error::{Error, Result};
use crate::io::{fmt_f64, Table};
use crate::model::VectorField;
use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::path::Path;

/// Default blow-up threshold on the state norm.
pub const DEFAULT_BLOWUP: f64 = 1e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Segment {
    pub t_start: f64,
    #[serde(with = "crate::io::plain_vec")]
    pub u: DVector<f64>,
}

/// Inputs held constant between successive segment start times.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Segment>", into = "Vec<Segment>")]
pub struct InputSchedule {
    segments: Vec<Segment>,
}

impl TryFrom<Vec<Segment>> for InputSchedule {
    type Error = Error;
    fn try_from(segments: Vec<Segment>) -> Result<Self> {
        Self::new(segments)
    }
}

impl From<InputSchedule> for Vec<Segment> {
    fn from(s: InputSchedule) -> Self {
        s.segments
    }
}

impl InputSchedule {
    pub fn new(segments: Vec<Segment>) -> Result<Self> {
        if segments.is_empty() {
            return Err(Error::Validation("input schedule has no segments".into()));
        }
        let n = segments[0].u.len();
        for w in segments.windows(2) {
            if !(w[1].t_start > w[0].t_start) {
                return Err(Error::Validation(format!(
                    "segment start times must increase strictly ({} then {})",
                    w[0].t_start, w[1].t_start
                )));
            }
        }
        if segments.iter().any(|s| s.u.len() != n) {
            return Err(Error::Validation("segments have different input sizes".into()));
        }
        if segments
            .iter()
            .any(|s| !s.t_start.is_finite() || s.u.iter().any(|v| !v.is_finite()))
        {
            return Err(Error::Validation("non-finite input schedule".into()));
        }
        Ok(Self { segments })
    }

    pub fn constant(t_start: f64, u: DVector<f64>) -> Self {
        Self {
            segments: vec![Segment { t_start, u }],
        }
    }

    /// Zero input of the given size starting at `t = 0`.
    pub fn zero(n_inputs: usize) -> Self {
        Self::constant(0.0, DVector::zeros(n_inputs))
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn start(&self) -> f64 {
        self.segments[0].t_start
    }

    pub fn n_inputs(&self) -> usize {
        self.segments[0].u.len()
    }

    pub fn input_at(&self, t: f64) -> &DVector<f64> {
        let idx = self.segments.partition_point(|s| s.t_start <= t);
        &self.segments[idx.saturating_sub(1)].u
    }
}

/// Additive bounded Gaussian noise: standard normal draws with `|s| > bound`
/// rejected, scaled by `amplitude`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NoiseSpec {
    pub amplitude: f64,
    #[serde(default = "default_bound")]
    pub bound: f64,
    pub seed: u64,
}

fn default_bound() -> f64 {
    3.0
}

impl NoiseSpec {
    pub fn new(amplitude: f64, seed: u64) -> Self {
        Self {
            amplitude,
            bound: 3.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(Error::Validation("noise amplitude must be >= 0".into()));
        }
        if !(self.bound > 0.0) {
            return Err(Error::Validation("noise bound must be positive".into()));
        }
        Ok(())
    }

    pub fn sampler(&self) -> BoundedGaussian {
        BoundedGaussian {
            amplitude: self.amplitude,
            bound: self.bound,
            rng: ChaCha8Rng::seed_from_u64(self.seed),
        }
    }
}

pub struct BoundedGaussian {
    amplitude: f64,
    bound: f64,
    rng: ChaCha8Rng,
}

impl BoundedGaussian {
    pub fn draw_scalar(&mut self) -> f64 {
        loop {
            let s: f64 = StandardNormal.sample(&mut self.rng);
            if s.abs() <= self.bound {
                return s * self.amplitude;
            }
        }
    }

    pub fn draw(&mut self, dim: usize) -> DVector<f64> {
        if self.amplitude == 0.0 {
            return DVector::zeros(dim);
        }
        DVector::from_iterator(dim, (0..dim).map(|_| self.draw_scalar()))
    }
}

/// `n` i.i.d. bounded-Gaussian vectors of length `dim`.
pub fn sample_bounded_gaussian(spec: &NoiseSpec, n: usize, dim: usize) -> Vec<DVector<f64>> {
    let mut s = spec.sampler();
    (0..n).map(|_| s.draw(dim)).collect()
}

#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub schedule: InputSchedule,
    pub noise_seed: Option<u64>,
    /// Additive forcing applied on each step (in `x'` units), if noise was on.
    pub forcing: Option<Vec<DVector<f64>>>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states.first().map_or(0, |s| s.len())
    }

    pub fn t_start(&self) -> f64 {
        self.times[0]
    }

    pub fn t_end(&self) -> f64 {
        *self.times.last().expect("nonempty trajectory")
    }

    pub fn last(&self) -> &DVector<f64> {
        self.states.last().expect("nonempty trajectory")
    }

    /// States as columns of an `N x T` matrix.
    pub fn matrix(&self) -> DMatrix<f64> {
        DMatrix::from_columns(&self.states)
    }

    pub fn to_table(&self) -> Table {
        let n = self.dim();
        let mut t = Table::new(
            std::iter::once("t".to_string()).chain((1..=n).map(|i| format!("x{i}"))),
        );
        for (ti, x) in self.times.iter().zip(&self.states) {
            t.push(std::iter::once(*ti).chain(x.iter().copied()).collect());
        }
        t
    }

    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_table().write(path)
    }

    /// Reads `t,x1,...,xN`; the schedule is set to zero input of size `n_inputs`.
    pub fn read_csv(path: impl AsRef<Path>, n_inputs: usize) -> Result<Self> {
        let table = Table::read(path)?;
        if table.rows.len() < 2 {
            return Err(Error::TooShort("trajectory file has fewer than 2 rows".into()));
        }
        let times: Vec<f64> = table.rows.iter().map(|r| r[0]).collect();
        let states = table
            .rows
            .iter()
            .map(|r| DVector::from_row_slice(&r[1..]))
            .collect();
        Ok(Self {
            schedule: InputSchedule::constant(times[0], DVector::zeros(n_inputs)),
            times,
            states,
            noise_seed: None,
            forcing: None,
        })
    }

    /// Samples with index in `range`, sharing schedule and seed.
    pub fn slice(&self, start: usize, end: usize) -> Self {
        Self {
            times: self.times[start..end].to_vec(),
            states: self.states[start..end].to_vec(),
            schedule: self.schedule.clone(),
            noise_seed: self.noise_seed,
            forcing: self
                .forcing
                .as_ref()
                .map(|f| f[start..(end - 1).max(start)].to_vec()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntegrateOptions {
    pub dt: f64,
    pub t_end: f64,
    #[serde(default)]
    pub noise: Option<NoiseSpec>,
    #[serde(default = "default_blowup")]
    pub blowup: f64,
}

fn default_blowup() -> f64 {
    DEFAULT_BLOWUP
}

impl IntegrateOptions {
    pub fn new(dt: f64, t_end: f64) -> Self {
        Self {
            dt,
            t_end,
            noise: None,
            blowup: DEFAULT_BLOWUP,
        }
    }

    pub fn with_noise(mut self, noise: NoiseSpec) -> Self {
        self.noise = Some(noise);
        self
    }

    pub fn with_blowup(mut self, blowup: f64) -> Self {
        self.blowup = blowup;
        self
    }
}

pub(crate) fn rk4_step<F: VectorField + ?Sized>(
    field: &F,
    x: &DVector<f64>,
    u: &DVector<f64>,
    h: f64,
    forcing: Option<&DVector<f64>>,
) -> DVector<f64> {
    let f = |y: &DVector<f64>| -> DVector<f64> {
        let v = field.eval(y, u);
        match forcing {
            Some(s) => v + s,
            None => v,
        }
    };
    let k1 = f(x);
    let k2 = f(&(x + &k1 * (h / 2.0)));
    let k3 = f(&(x + &k2 * (h / 2.0)));
    let k4 = f(&(x + &k3 * h));
    x + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (h / 6.0)
}

/// Classical RK4 from `schedule.start()` to `opts.t_end`.
///
/// Steps are aligned with segment boundaries: each segment `[a, b)` is cut
/// into `ceil((b - a) / dt)` equal steps. Input and noise draw are frozen on
/// each step; the noise is scaled by the field's forcing gain.
pub fn integrate<F: VectorField + ?Sized>(
    field: &F,
    x0: &DVector<f64>,
    schedule: &InputSchedule,
    opts: &IntegrateOptions,
) -> Result<Trajectory> {
    let n = field.dim();
    if x0.len() != n {
        return Err(Error::dims("initial state", n, x0.len()));
    }
    if schedule.n_inputs() != field.n_inputs() {
        return Err(Error::dims("input schedule", field.n_inputs(), schedule.n_inputs()));
    }
    if !(opts.dt > 0.0 && opts.dt.is_finite()) {
        return Err(Error::Validation(format!("dt must be positive, got {}", opts.dt)));
    }
    let t0 = schedule.start();
    if !(opts.t_end > t0) {
        return Err(Error::Validation(format!(
            "t_end = {} must exceed the start time {t0}",
            opts.t_end
        )));
    }
    let mut noise = match &opts.noise {
        Some(spec) => {
            spec.validate()?;
            Some(spec.sampler())
        }
        None => None,
    };
    let gain = field.forcing_gain();

    let mut times = vec![t0];
    let mut states = vec![x0.clone()];
    let mut forcing_log = noise.as_ref().map(|_| Vec::new());
    let mut x = x0.clone();
    let segs = schedule.segments();
    for (k, seg) in segs.iter().enumerate() {
        if seg.t_start >= opts.t_end {
            break;
        }
        let b = segs
            .get(k + 1)
            .map_or(opts.t_end, |s| s.t_start.min(opts.t_end));
        let span = b - seg.t_start;
        let steps = ((span / opts.dt) * (1.0 - 1e-12)).ceil().max(1.0) as usize;
        let h = span / steps as f64;
        for s in 1..=steps {
            let forcing = noise.as_mut().map(|g| g.draw(n) * gain);
            let next = rk4_step(field, &x, &seg.u, h, forcing.as_ref());
            let t = if s == steps {
                b
            } else {
                seg.t_start + s as f64 * h
            };
            let norm = next.norm();
            if !(norm <= opts.blowup) {
                return Err(Error::Divergence {
                    t,
                    last_valid_t: *times.last().unwrap(),
                    norm,
                });
            }
            if let (Some(log), Some(f)) = (forcing_log.as_mut(), forcing) {
                log.push(f);
            }
            x = next;
            times.push(t);
            states.push(x.clone());
        }
    }
    Ok(Trajectory {
        times,
        states,
        schedule: schedule.clone(),
        noise_seed: opts.noise.as_ref().map(|s| s.seed),
        forcing: forcing_log,
    })
}

/// Integration of an input-free field (or one with zero input) from `t = 0`.
pub fn integrate_autonomous<F: VectorField + ?Sized>(
    field: &F,
    x0: &DVector<f64>,
    dt: f64,
    t_end: f64,
) -> Result<Trajectory> {
    integrate(
        field,
        x0,
        &InputSchedule::zero(field.n_inputs()),
        &IntegrateOptions::new(dt, t_end),
    )
}

/// Drops the samples with `t - t_start < transient`.
pub fn trim_time(traj: &Trajectory, transient: f64) -> Result<Trajectory> {
    if !(transient >= 0.0) {
        return Err(Error::Validation("transient must be >= 0".into()));
    }
    if transient == 0.0 {
        return Ok(traj.clone());
    }
    trim_transient(traj, -1.0, transient)
}

/// Drops the samples with `t - t_start < factor / |rate|`.
pub fn trim_transient(traj: &Trajectory, rate: f64, factor: f64) -> Result<Trajectory> {
    if !(rate < 0.0) {
        return Err(Error::Validation(format!(
            "transient rate must be negative, got {rate}"
        )));
    }
    if !(factor >= 0.0) {
        return Err(Error::Validation("trim factor must be >= 0".into()));
    }
    let cutoff = factor / rate.abs();
    let t0 = traj.t_start();
    let tol = 1e-9 * (traj.t_end() - t0).abs().max(1.0);
    let start = traj
        .times
        .iter()
        .position(|&t| t - t0 >= cutoff - tol)
        .unwrap_or(traj.len());
    if traj.len() - start < 2 {
        return Err(Error::TooShort(format!(
            "only {} samples remain after trimming {cutoff} time units",
            traj.len() - start
        )));
    }
    Ok(traj.slice(start, traj.len()))
}

/// Initial-condition samplers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitSampler {
    /// Uniform in the ball of radius `radius` around `center`.
    Ball {
        #[serde(with = "crate::io::plain_vec")]
        center: DVector<f64>,
        radius: f64,
    },
    /// `center + basis c + p`, with `c` uniform in the `radius`-ball of the
    /// subspace and `p` uniform in the full `perturbation`-ball.
    Subspace {
        #[serde(with = "crate::io::plain_vec")]
        center: DVector<f64>,
        #[serde(with = "crate::io::row_major")]
        basis: DMatrix<f64>,
        radius: f64,
        perturbation: f64,
    },
    /// Cycles through the given points.
    Points { points: Vec<Vec<f64>> },
}

fn uniform_ball<R: Rng>(rng: &mut R, dim: usize, radius: f64) -> DVector<f64> {
    if radius == 0.0 || dim == 0 {
        return DVector::zeros(dim);
    }
    let g: DVector<f64> = DVector::from_iterator(dim, (0..dim).map(|_| StandardNormal.sample(rng)));
    let norm = g.norm();
    let r = radius * rng.random::<f64>().powf(1.0 / dim as f64);
    g * (r / norm)
}

impl InitSampler {
    /// The ball of radius `5 delta` around `center`.
    pub fn five_delta_ball(center: DVector<f64>, delta: f64) -> Self {
        InitSampler::Ball {
            center,
            radius: 5.0 * delta,
        }
    }

    pub fn dim(&self) -> usize {
        match self {
            InitSampler::Ball { center, .. } | InitSampler::Subspace { center, .. } => center.len(),
            InitSampler::Points { points: p } => p.first().map_or(0, Vec::len),
        }
    }

    pub fn sample<R: Rng>(&self, rng: &mut R, index: usize) -> DVector<f64> {
        match self {
            InitSampler::Ball { center, radius } => {
                center + uniform_ball(rng, center.len(), *radius)
            }
            InitSampler::Subspace {
                center,
                basis,
                radius,
                perturbation,
            } => {
                let c = uniform_ball(rng, basis.ncols(), *radius);
                center + basis * c + uniform_ball(rng, center.len(), *perturbation)
            }
            InitSampler::Points { points: p } => DVector::from_row_slice(&p[index % p.len()]),
        }
    }
}

/// Independent 64-bit seed for member `index` of a seeded family.
pub fn derive_seed(master: u64, index: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(index + 1);
    rng.next_u64()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnsembleConfig {
    pub dt: f64,
    pub t_end: f64,
    pub n_traj: usize,
    #[serde(default)]
    pub noise_amplitude: f64,
    #[serde(default = "default_bound")]
    pub noise_bound: f64,
    pub split_fraction: f64,
    pub seed: u64,
}

#[derive(Clone, Debug)]
pub struct Ensemble {
    pub trajectories: Vec<Trajectory>,
    pub split: Vec<Split>,
    pub seeds: Vec<u64>,
}

impl Ensemble {
    pub fn train(&self) -> Vec<&Trajectory> {
        self.members(Split::Train)
    }

    pub fn test(&self) -> Vec<&Trajectory> {
        self.members(Split::Test)
    }

    fn members(&self, which: Split) -> Vec<&Trajectory> {
        self.trajectories
            .iter()
            .zip(&self.split)
            .filter(|(_, s)| **s == which)
            .map(|(t, _)| t)
            .collect()
    }

    /// Writes `traj_XXX.csv` members and a `manifest.json` with seeds,
    /// split labels and the given configuration.
    pub fn write_dir(&self, dir: impl AsRef<Path>, config: &serde_json::Value) -> Result<()> {
        let dir = dir.as_ref();
        let mut members = Vec::new();
        for (i, (traj, split)) in self.trajectories.iter().zip(&self.split).enumerate() {
            let file = format!("traj_{i:03}.csv");
            traj.write_csv(dir.join(&file))?;
            members.push(serde_json::json!({
                "file": file,
                "seed": self.seeds[i],
                "split": split,
            }));
        }
        crate::io::write_json(
            dir.join("manifest.json"),
            &serde_json::json!({ "members": members, "config": config }),
        )
    }
}

/// Seeded train/test labels with `round(fraction * n)` training members.
pub fn split_labels(n: usize, fraction: f64, seed: u64) -> Vec<Split> {
    let n_train = ((fraction * n as f64).round() as usize).clamp(1, n.saturating_sub(1).max(1));
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(0);
    idx.shuffle(&mut rng);
    let mut labels = vec![Split::Test; n];
    for &i in &idx[..n_train] {
        labels[i] = Split::Train;
    }
    labels
}

pub fn generate_ensemble<F: VectorField + ?Sized>(
    field: &F,
    sampler: &InitSampler,
    schedule: &InputSchedule,
    cfg: &EnsembleConfig,
) -> Result<Ensemble> {
    if cfg.n_traj < 2 {
        return Err(Error::Validation("an ensemble needs at least 2 trajectories".into()));
    }
    if !(cfg.split_fraction > 0.0 && cfg.split_fraction < 1.0) {
        return Err(Error::Validation("split_fraction must lie in (0, 1)".into()));
    }
    if sampler.dim() != field.dim() {
        return Err(Error::dims("initial-condition sampler", field.dim(), sampler.dim()));
    }
    let mut trajectories = Vec::with_capacity(cfg.n_traj);
    let mut seeds = Vec::with_capacity(cfg.n_traj);
    for i in 0..cfg.n_traj {
        let seed = derive_seed(cfg.seed, i as u64);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x0 = sampler.sample(&mut rng, i);
        let mut opts = IntegrateOptions::new(cfg.dt, cfg.t_end);
        if cfg.noise_amplitude > 0.0 {
            opts.noise = Some(NoiseSpec {
                amplitude: cfg.noise_amplitude,
                bound: cfg.noise_bound,
                seed: derive_seed(seed, 0),
            });
        }
        let traj = integrate(field, &x0, schedule, &opts).map_err(|e| Error::MemberDiverged {
            index: i,
            source: Box::new(e),
        })?;
        trajectories.push(traj);
        seeds.push(seed);
    }
    Ok(Ensemble {
        trajectories,
        split: split_labels(cfg.n_traj, cfg.split_fraction, cfg.seed),
        seeds,
    })
}

/// Human-readable one-line summary of a trajectory, for logs.
pub fn describe(traj: &Trajectory) -> String {
    format!(
        "{} samples on [{}, {}], dim {}",
        traj.len(),
        fmt_f64(traj.t_start()),
        fmt_f64(traj.t_end()),
        traj.dim()
    )
}
