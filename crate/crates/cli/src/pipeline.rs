//! Command pipelines. Each returns the artifacts it wrote; failures carry
//! the name of the stage that raised them.

use crate::config::*;
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};
use ssmr_core::error::Error;
use ssmr_core::ftle::{extract_ridges, ftle_field, ridges_table, FtleOptions, PlaneSpec};
use ssmr_core::io::{write_json, Table};
use ssmr_core::linalg::orthonormalize;
use ssmr_core::model::{PolynomialSystem, RnnModel, VectorField};
use ssmr_core::nonautonomous::{anchor_expansion, td_ssm_coeffs, ForcingRecord};
use ssmr_core::reduced::{
    domain_from_points, estimate_eta_dot, fit_reduced, nmte, phase_portrait, type_number_scan, ReducedModel,
};
use ssmr_core::simulate::{
    derive_seed, generate_ensemble, integrate, trim_time, EnsembleConfig, InitSampler, InputSchedule,
    IntegrateOptions, NoiseSpec, Trajectory,
};
use ssmr_core::ssm::{fit_ssm_data, select_order, ssm_taylor, SsmChart};
use ssmr_core::steady::{
    continuation_scan, find_fixed_points, newton, select_slow_subspace, FixedPoint, SpectralDecomposition,
    SubspaceSelection,
};
use std::path::{Path, PathBuf};

#[derive(Debug)]
pub struct StageError {
    pub stage: String,
    pub error: Error,
}

impl StageError {
    pub fn exit_code(&self) -> i32 {
        if self.error.is_numerical() {
            3
        } else {
            2
        }
    }
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage `{}` failed: {}", self.stage, self.error)
    }
}

pub type StageResult<T> = std::result::Result<T, StageError>;

trait Stage<T> {
    fn stage(self, name: &str) -> StageResult<T>;
}

impl<T> Stage<T> for ssmr_core::error::Result<T> {
    fn stage(self, name: &str) -> StageResult<T> {
        self.map_err(|error| StageError {
            stage: name.to_string(),
            error,
        })
    }
}

/// A model file: a recurrent network, or a polynomial system (recognized by
/// its `terms` field).
pub enum LoadedModel {
    Rnn(RnnModel),
    Poly(PolynomialSystem),
}

impl LoadedModel {
    pub fn load(path: &Path) -> ssmr_core::error::Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
            path: path.display().to_string(),
            source: e,
        })?;
        let value: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
            field: "<root>".into(),
            message: format!("{}: {e}", path.display()),
        })?;
        if value.get("terms").is_some() {
            serde_json::from_value(value).map(LoadedModel::Poly).map_err(|e| Error::Parse {
                field: "terms".into(),
                message: e.to_string(),
            })
        } else {
            RnnModel::from_json(&value).map(LoadedModel::Rnn)
        }
    }

    pub fn field(&self) -> &dyn VectorField {
        match self {
            LoadedModel::Rnn(m) => m,
            LoadedModel::Poly(p) => p,
        }
    }

    fn readout(&self, x: &DVector<f64>, which: Readout) -> f64 {
        match (self, which) {
            (LoadedModel::Rnn(m), Readout::Z0) => m.readout(x).map(|z| z[0]).unwrap_or(f64::NAN),
            _ => x[0],
        }
    }
}

pub struct Context {
    pub cfg: RunConfig,
    pub out: PathBuf,
    pub written: Vec<String>,
    pub seeds: Value,
}

impl Context {
    pub fn new(cfg: RunConfig) -> StageResult<Self> {
        let out = cfg.output_dir.clone();
        std::fs::create_dir_all(&out)
            .map_err(|e| Error::Io {
                path: out.display().to_string(),
                source: e,
            })
            .stage("output")?;
        Ok(Self {
            cfg,
            out,
            written: Vec::new(),
            seeds: json!({}),
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.written.push(name.to_string());
        self.out.join(name)
    }

    fn model(&self) -> StageResult<LoadedModel> {
        let p = self
            .cfg
            .model
            .as_ref()
            .ok_or_else(|| Error::Validation("config has no `model` path".into()))
            .stage("model")?;
        LoadedModel::load(p).stage("model")
    }

    fn schedule(&mut self, f: &dyn VectorField) -> StageResult<InputSchedule> {
        let s = self.cfg.input.clone().unwrap_or_else(|| InputSchedule::zero(f.n_inputs()));
        if s.n_inputs() != f.n_inputs() {
            return Err(Error::Validation(format!(
                "input schedule has {} inputs, model has {}",
                s.n_inputs(),
                f.n_inputs()
            )))
            .stage("input");
        }
        self.cfg.input = Some(s.clone());
        Ok(s)
    }

    fn write_table(&mut self, name: &str, t: &Table) -> StageResult<()> {
        let p = self.path(name);
        t.write(p).stage("write")
    }

    fn write_json<T: serde::Serialize>(&mut self, name: &str, v: &T) -> StageResult<()> {
        let p = self.path(name);
        write_json(p, v).stage("write")
    }
}

fn anchor_point(ctx: &mut Context, f: &dyn VectorField, u: &DVector<f64>) -> StageResult<FixedPoint> {
    let block = ctx.cfg.ssm.get_or_insert_with(SsmBlock::default).clone();
    let seed = block
        .anchor_seed
        .map(DVector::from_vec)
        .unwrap_or_else(|| DVector::zeros(f.dim()));
    if seed.len() != f.dim() {
        return Err(Error::Validation(format!(
            "anchor seed has length {}, model has {} states",
            seed.len(),
            f.dim()
        )))
        .stage("anchor");
    }
    let opts = ctx.cfg.fixed_points.clone().unwrap_or_default().newton;
    let x0 = newton(f, u, &seed, &opts)
        .ok_or_else(|| Error::NoResult("Newton did not converge from the anchor seed".into()))
        .stage("anchor")?;
    FixedPoint::at(f, x0, u.clone(), opts.hyperbolicity_tol).stage("anchor")
}

fn spectrum_json(spec: &SpectralDecomposition) -> Value {
    json!(spec.eigenvalues.iter().map(|l| [l.re, l.im]).collect::<Vec<_>>())
}

pub fn cmd_simulate(ctx: &mut Context) -> StageResult<()> {
    let model = ctx.model()?;
    let f = model.field();
    let schedule = ctx.schedule(f)?;
    let sim = ctx.cfg.simulation.get_or_insert_with(SimulationBlock::default).clone();
    let sampler = sim.init.clone().unwrap_or(InitSampler::Ball {
        center: DVector::zeros(f.dim()),
        radius: 0.5,
    });
    ctx.cfg.simulation.as_mut().unwrap().init = Some(sampler.clone());
    let ens = generate_ensemble(f, &sampler, &schedule, &ensemble_config(&sim, ctx.cfg.seed)).stage("simulate")?;
    ctx.seeds = json!({ "master": ctx.cfg.seed, "members": ens.seeds });
    let echo = serde_json::to_value(&ctx.cfg).expect("config serializes");
    ens.write_dir(&ctx.out, &echo).stage("write")?;
    for i in 0..ens.trajectories.len() {
        ctx.written.push(format!("traj_{i:03}.csv"));
    }
    ctx.written.push("manifest.json".into());
    Ok(())
}

fn ensemble_config(sim: &SimulationBlock, seed: u64) -> EnsembleConfig {
    EnsembleConfig {
        dt: sim.dt,
        t_end: sim.t_end,
        n_traj: sim.n_traj,
        noise_amplitude: sim.noise_amplitude,
        noise_bound: sim.noise_bound,
        split_fraction: sim.split_fraction,
        seed,
    }
}

pub fn cmd_fixed_points(ctx: &mut Context) -> StageResult<()> {
    let model = ctx.model()?;
    let f = model.field();
    let schedule = ctx.schedule(f)?;
    let u = schedule.input_at(schedule.start()).clone();
    let block = ctx.cfg.fixed_points.get_or_insert_with(FixedPointsBlock::default).clone();
    let mut seeds = vec![DVector::zeros(f.dim())];
    for s in &block.extra_seeds {
        seeds.push(DVector::from_vec(s.clone()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(ctx.cfg.seed);
    for _ in 0..block.n_seeds {
        seeds.push(DVector::from_fn(f.dim(), |_, _| {
            rng.random_range(-block.seed_radius..=block.seed_radius)
        }));
    }
    let search = find_fixed_points(f, &u, &seeds, &block.newton).stage("fixed-points")?;
    let spectra = search
        .points
        .iter()
        .map(|p| SpectralDecomposition::new(&f.eval_jacobian(&p.x0, &u)).map(|s| spectrum_json(&s)))
        .collect::<ssmr_core::error::Result<Vec<_>>>()
        .stage("spectrum")?;
    ctx.seeds = json!({ "master": ctx.cfg.seed });
    ctx.write_json(
        "fixed_points.json",
        &json!({
            "points": search.points,
            "eigenvalues": spectra,
            "n_seeds": search.n_seeds,
            "n_failed": search.n_failed,
        }),
    )
}

struct ChartStage {
    chart: SsmChart,
    train: Vec<Trajectory>,
    test: Vec<Trajectory>,
    u: DVector<f64>,
}

fn chart_stage(ctx: &mut Context, f: &dyn VectorField) -> StageResult<ChartStage> {
    let schedule = ctx.schedule(f)?;
    let u = schedule.input_at(schedule.start()).clone();
    let fp = anchor_point(ctx, f, &u)?;
    let block = ctx.cfg.ssm.clone().unwrap_or_default();
    let spec = SpectralDecomposition::new(&f.eval_jacobian(&fp.x0, &u)).stage("spectrum")?;
    let sel: SubspaceSelection = select_slow_subspace(&spec, block.d, block.strict_cut).stage("subspace")?;
    let v_e = orthonormalize(&sel.v_e);
    ctx.write_json(
        "subspace.json",
        &json!({ "selection": sel, "eigenvalues": spectrum_json(&spec), "fixed_point": fp }),
    )?;

    let sim = ctx.cfg.simulation.get_or_insert_with(SimulationBlock::default).clone();
    let sampler = sim.init.clone().unwrap_or(InitSampler::Ball {
        center: fp.x0.clone(),
        radius: 0.5,
    });
    ctx.cfg.simulation.as_mut().unwrap().init = Some(sampler.clone());
    let ens = generate_ensemble(f, &sampler, &schedule, &ensemble_config(&sim, ctx.cfg.seed)).stage("simulate")?;
    ctx.seeds = json!({ "master": ctx.cfg.seed, "members": ens.seeds });
    let trim = |t: &Trajectory| trim_time(t, sim.transient).stage("simulate");
    let train = ens.train().into_iter().map(trim).collect::<StageResult<Vec<_>>>()?;
    let test = ens.test().into_iter().map(trim).collect::<StageResult<Vec<_>>>()?;

    let chart = match block.method {
        SsmMethod::Data => {
            let full = fit_ssm_data(&train, &fp.x0, &v_e, block.max_order).stage("fit-ssm")?;
            let curve = full.diagnostics.residual_curve.clone();
            let m = block
                .order
                .or_else(|| select_order(&curve, block.min_improvement))
                .unwrap_or(block.max_order);
            let mut chart = if m == block.max_order {
                full
            } else {
                fit_ssm_data(&train, &fp.x0, &v_e, m).stage("fit-ssm")?
            };
            chart.diagnostics.residual_curve = curve;
            chart
        }
        SsmMethod::Taylor => {
            let m = block.order.unwrap_or(block.max_order);
            ssm_taylor(f, &fp.x0, &u, &v_e, m).stage("fit-ssm")?.chart
        }
    };
    Ok(ChartStage {
        chart,
        train,
        test,
        u,
    })
}

fn write_chart(ctx: &mut Context, st: &ChartStage) -> StageResult<()> {
    let p = ctx.path("chart.json");
    st.chart.save(p).stage("write")?;
    let mut curve = Table::new(["order", "mfe"]);
    for &(m, e) in &st.chart.diagnostics.residual_curve {
        curve.push(vec![m as f64, e]);
    }
    ctx.write_table("residual_curve.csv", &curve)?;
    let train = st.chart.mfe(&st.train).stage("mfe")?;
    let test = if st.test.is_empty() {
        None
    } else {
        Some(st.chart.mfe(&st.test).stage("mfe")?)
    };
    ctx.write_json("mfe.json", &json!({ "train": train, "test": test, "order": st.chart.order() }))
}

pub fn cmd_fit_ssm(ctx: &mut Context) -> StageResult<()> {
    let model = ctx.model()?;
    let st = chart_stage(ctx, model.field())?;
    write_chart(ctx, &st)
}

fn reduced_stage(ctx: &mut Context, st: &ChartStage) -> StageResult<ReducedModel> {
    let block = ctx.cfg.reduced.get_or_insert_with(ReducedBlock::default).clone();
    let samples = estimate_eta_dot(&st.train, &st.chart, block.derivative_scheme).stage("eta-dot")?;
    let mut model = fit_reduced(&samples, block.order, block.ridge).stage("fit-reduced")?;
    model.chart_ref = Some("chart.json".into());
    model.derivative_scheme = Some(block.derivative_scheme);
    model.domain_radius = samples.eta.iter().map(|e| e.norm()).reduce(f64::max);
    Ok(model)
}

pub fn cmd_fit_reduced(ctx: &mut Context) -> StageResult<()> {
    let model = ctx.model()?;
    let st = chart_stage(ctx, model.field())?;
    write_chart(ctx, &st)?;
    let rm = reduced_stage(ctx, &st)?;
    let p = ctx.path("reduced_model.json");
    rm.save(p).stage("write")?;
    let report = if st.test.is_empty() {
        None
    } else {
        Some(nmte(&rm, &st.chart, &st.test).stage("nmte")?)
    };
    ctx.write_json("nmte.json", &report)
}

pub fn cmd_portrait(ctx: &mut Context) -> StageResult<()> {
    let model = ctx.model()?;
    let f = model.field();
    let st = chart_stage(ctx, f)?;
    write_chart(ctx, &st)?;
    let rm = reduced_stage(ctx, &st)?;
    let p = ctx.path("reduced_model.json");
    rm.save(p).stage("write")?;
    let block = ctx.cfg.portrait.get_or_insert_with(PortraitBlock::default).clone();
    let domain = match block.domain {
        Some(d) => d,
        None => {
            let etas: Vec<DVector<f64>> = st
                .train
                .iter()
                .flat_map(|t| t.states.iter().map(|x| st.chart.project(x)))
                .collect();
            domain_from_points(&etas, 1.5).stage("portrait")?
        }
    };
    ctx.cfg.portrait.as_mut().unwrap().domain = Some(domain.clone());
    let report = phase_portrait(&rm, Some((f, &st.u, &st.chart)), &domain, &block.options).stage("portrait")?;
    ctx.write_json("portrait.json", &report)?;
    for (k, c) in report.limit_cycles.iter().enumerate() {
        let mut t = Table::new((1..=rm.d).map(|i| format!("eta{i}")));
        for s in &c.samples {
            t.push(s.clone());
        }
        ctx.write_table(&format!("limit_cycle_{k}.csv"), &t)?;
    }
    if let Some(h) = &report.heteroclinics {
        let mut t = Table::new(["branch", "source", "side", "eta1", "eta2"]);
        for (b, br) in h.branches.iter().enumerate() {
            for p in &br.polyline {
                t.push(vec![b as f64, br.source as f64, br.side as f64, p[0], p[1]]);
            }
        }
        ctx.write_table("heteroclinic.csv", &t)?;
    }
    Ok(())
}

pub fn cmd_ftle(ctx: &mut Context) -> StageResult<()> {
    let model = ctx.model()?;
    let f = model.field();
    let schedule = ctx.schedule(f)?;
    let u = schedule.input_at(schedule.start()).clone();
    let block = ctx.cfg.ftle.get_or_insert_with(FtleBlock::default).clone();
    let base = match &block.base {
        Some(b) => DVector::from_vec(b.clone()),
        None => anchor_point(ctx, f, &u)?.x0,
    };
    ctx.cfg.ftle.as_mut().unwrap().base = Some(base.iter().copied().collect());
    let plane = match &block.plane {
        PlaneChoice::Axes { axes } => PlaneSpec::axes(base.clone(), axes[0], axes[1], block.n, block.extents),
        PlaneChoice::Basis { e1, e2 } => {
            plane_from_vectors(base.iter().copied().collect(), e1.clone(), e2.clone(), block.n, block.extents)
        }
        PlaneChoice::Slow => {
            let spec = SpectralDecomposition::new(&f.eval_jacobian(&base, &u)).stage("spectrum")?;
            if spec.dim() < 2 {
                return Err(Error::Validation("a plane needs at least two states".into())).stage("ftle");
            }
            let q = orthonormalize(&spec.realizer.columns(0, 2).into_owned());
            PlaneSpec::new(base.clone(), q.column(0).into_owned(), q.column(1).into_owned(), block.n, block.extents)
        }
    }
    .stage("plane")?;
    let mut opts = FtleOptions::new(block.dt, block.horizon);
    opts.fd_step = block.fd_step;
    let field = ftle_field(f, &u, &plane, &opts).stage("ftle")?;
    if let Some(w) = &field.warning {
        eprintln!("warning: {w}");
    }
    let ridges = extract_ridges(&field, block.quantile).stage("ridges")?;
    ctx.write_table("ftle.csv", &field.to_table())?;
    ctx.write_table("ridges.csv", &ridges_table(&ridges))?;
    ctx.write_json(
        "plane.json",
        &json!({
            "plane": plane,
            "horizon": field.horizon,
            "fd_step": field.fd_step,
            "masked_fraction": field.masked_fraction,
            "warning": field.warning,
        }),
    )
}

pub fn cmd_anchor(ctx: &mut Context) -> StageResult<()> {
    let model = ctx.model()?;
    let f = model.field();
    let schedule = ctx.schedule(f)?;
    let u = schedule.input_at(schedule.start()).clone();
    let fp = anchor_point(ctx, f, &u)?;
    let block = ctx.cfg.anchor.get_or_insert_with(AnchorBlock::default).clone();
    let noise_seed = block.noise_seed.unwrap_or_else(|| derive_seed(ctx.cfg.seed, 0));
    ctx.cfg.anchor.as_mut().unwrap().noise_seed = Some(noise_seed);
    ctx.seeds = json!({ "master": ctx.cfg.seed, "noise": noise_seed });
    let mut noise = NoiseSpec::new(block.epsilon, noise_seed);
    noise.bound = block.noise_bound;
    let opts = IntegrateOptions::new(block.dt, block.t_end).with_noise(noise);
    let frozen = InputSchedule::constant(0.0, u.clone());
    let traj = integrate(f, &fp.x0, &frozen, &opts).stage("simulate")?;
    let rec = ForcingRecord::from_trajectory(&traj, block.epsilon).stage("forcing")?;
    let exp = anchor_expansion(f, &fp.x0, &u, &rec, block.order).stage("anchor")?;
    let p = ctx.path("trajectory.csv");
    traj.write_csv(p).stage("write")?;
    let header = |prefix: &str| {
        std::iter::once("t".to_string())
            .chain((1..=f.dim()).map(|i| format!("{prefix}{i}")))
            .collect::<Vec<_>>()
    };
    for nu in 1..=exp.order() {
        let mut t = Table::new(header("y_"));
        for (k, &time) in exp.times.iter().enumerate() {
            t.push(std::iter::once(time).chain(exp.orders[nu - 1][k].iter().copied()).collect());
        }
        ctx.write_table(&format!("anchor_order{nu}.csv"), &t)?;
    }
    ctx.write_json(
        "anchor.json",
        &json!({
            "fixed_point": fp,
            "epsilon": exp.epsilon,
            "order": exp.order(),
            "valid_window": exp.valid_window,
            "bound_constants": exp.bound_constants,
        }),
    )?;
    if block.td_coeffs {
        let y1: Vec<DVector<f64>> = (0..exp.times.len()).map(|k| exp.term(1, k)).collect();
        match td_ssm_coeffs(f, &fp.x0, &u, None, &rec, &y1) {
            Ok(c) => {
                let mut t = Table::new(
                    std::iter::once("t".to_string()).chain((1..=c.v_indices.len()).map(|i| format!("h11_{i}"))),
                );
                for (k, &time) in c.times.iter().enumerate() {
                    t.push(std::iter::once(time).chain(c.h11[k].iter().copied()).collect());
                }
                ctx.write_table("h11.csv", &t)?;
                ctx.write_json(
                    "td_ssm_coeffs.json",
                    &json!({
                        "lambda1": c.lambda1,
                        "slow_index": c.slow_index,
                        "v_indices": c.v_indices,
                        "h20": c.h20.iter().copied().collect::<Vec<_>>(),
                        "epsilon": c.epsilon,
                        "valid_window": c.valid_window,
                    }),
                )?;
            }
            Err(Error::Unsupported(msg)) => eprintln!("note: time-dependent coefficients skipped: {msg}"),
            Err(e) => return Err(e).stage("td-coeffs"),
        }
    }
    Ok(())
}

pub fn cmd_continuation(ctx: &mut Context) -> StageResult<()> {
    let model = ctx.model()?;
    let f = model.field();
    let schedule = ctx.schedule(f)?;
    let u = schedule.input_at(schedule.start()).clone();
    let block = ctx.cfg.continuation.get_or_insert_with(ContinuationBlock::default).clone();
    if f.n_inputs() == 0 {
        return Err(Error::Validation("continuation needs a model with inputs".into())).stage("continuation");
    }
    let dir = match &block.direction {
        Some(d) => DVector::from_vec(d.clone()),
        None => {
            let mut e = DVector::zeros(f.n_inputs());
            e[0] = 1.0;
            e
        }
    };
    ctx.cfg.continuation.as_mut().unwrap().direction = Some(dir.iter().copied().collect());
    let mut seeds: Vec<DVector<f64>> = block.seeds.iter().map(|s| DVector::from_vec(s.clone())).collect();
    if seeds.is_empty() {
        seeds.push(DVector::zeros(f.dim()));
    }
    let diagram = continuation_scan(
        f,
        &u,
        &dir,
        block.mu_range,
        block.n_steps,
        &seeds,
        |x| model.readout(x, block.readout),
        &block.options,
    )
    .stage("continuation")?;
    ctx.seeds = json!({ "master": ctx.cfg.seed, "continuation": block.options.seed });
    ctx.write_table("diagram.csv", &diagram.to_table())?;
    ctx.write_json("events.json", &diagram.events)?;
    let scan = type_number_scan(f, &diagram, block.type_numbers_d).stage("type-numbers")?;
    let mut t = Table::new(["mu", "n_points", "sup_nu", "sup_sigma", "interpolated"]);
    for r in &scan.rows {
        t.push(vec![
            r.mu,
            r.n_points as f64,
            r.sup_nu.unwrap_or(f64::NAN),
            r.sup_sigma.unwrap_or(f64::NAN),
            if r.interpolated { 1.0 } else { 0.0 },
        ]);
    }
    ctx.write_table("type_numbers.csv", &t)
}

pub fn cmd_export_surface(ctx: &mut Context) -> StageResult<()> {
    let block = ctx.cfg.export.get_or_insert_with(ExportBlock::default).clone();
    let chart_path = block
        .chart
        .as_ref()
        .ok_or_else(|| Error::Validation("export needs `export.chart`".into()))
        .stage("export")?;
    let chart = SsmChart::load(chart_path).stage("export")?;
    let d = chart.d();
    if d > 2 {
        return Err(Error::Validation(format!("surface export needs d <= 2, chart has d = {d}"))).stage("export");
    }
    if block.n < 2 {
        return Err(Error::Validation("export grid needs n >= 2".into())).stage("export");
    }
    let extent = block.extent.clone().unwrap_or_else(|| vec![(-1.0, 1.0); d]);
    if extent.len() != d {
        return Err(Error::Validation(format!("export extent needs {d} ranges"))).stage("export");
    }
    ctx.cfg.export.as_mut().unwrap().extent = Some(extent.clone());
    let reduced = match &block.reduced {
        Some(p) => Some(ReducedModel::load(p).stage("export")?),
        None => None,
    };
    if let Some(r) = &reduced {
        if r.d != d {
            return Err(Error::Validation("reduced model and chart dimensions differ".into())).stage("export");
        }
    }
    let axis = |k: usize, i: usize| extent[k].0 + (extent[k].1 - extent[k].0) * i as f64 / (block.n - 1) as f64;
    let grid: Vec<DVector<f64>> = if d == 1 {
        (0..block.n).map(|i| DVector::from_element(1, axis(0, i))).collect()
    } else {
        (0..block.n)
            .flat_map(|i| (0..block.n).map(move |j| (i, j)))
            .map(|(i, j)| DVector::from_vec(vec![axis(0, i), axis(1, j)]))
            .collect()
    };
    let eta_names: Vec<String> = (1..=d).map(|i| format!("eta{i}")).collect();
    let mut surf = Table::new(
        eta_names
            .iter()
            .cloned()
            .chain((1..=chart.n()).map(|i| format!("x{i}"))),
    );
    for e in &grid {
        surf.push(e.iter().copied().chain(chart.lift(e).iter().copied()).collect());
    }
    ctx.write_table("surface.csv", &surf)?;
    if let Some(r) = &reduced {
        let mut t = Table::new(
            eta_names
                .iter()
                .cloned()
                .chain((1..=d).map(|i| format!("deta{i}"))),
        );
        for e in &grid {
            t.push(e.iter().copied().chain(r.rhs(e).iter().copied()).collect());
        }
        ctx.write_table("field.csv", &t)?;
    }
    Ok(())
}

/// Writes `run.json`: effective configuration, versions, seeds, timing.
pub fn write_provenance(ctx: &mut Context, command: &str, wall_time_s: f64, threads: Option<usize>) -> StageResult<()> {
    let record = json!({
        "command": command,
        "config": ctx.cfg,
        "versions": {
            "ssmr-cli": env!("CARGO_PKG_VERSION"),
            "ssmr-core": ssmr_core::VERSION,
        },
        "seeds": ctx.seeds,
        "threads": threads,
        "artifacts": ctx.written,
        "wall_time_s": wall_time_s,
    });
    write_json(ctx.out.join("run.json"), &record).stage("write")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes_follow_error_kind() {
        let v = StageError {
            stage: "x".into(),
            error: Error::Validation("bad".into()),
        };
        assert_eq!(v.exit_code(), 2);
        let n = StageError {
            stage: "x".into(),
            error: Error::IllPosed("rank".into()),
        };
        assert_eq!(n.exit_code(), 3);
        assert!(n.to_string().contains("stage `x`"));
    }
}
