use nalgebra::{DMatrix, DVector};
use ssmr_core::ftle::{extract_ridges, ftle_field, FtleOptions, PlaneSpec};
use ssmr_core::linalg::random_orthogonal;
use ssmr_core::model::{fd_jacobian, Embedded, GenericSystem, PolynomialSystem, RnnModel};
use ssmr_core::nonautonomous::{anchor_expansion, ForcingRecord};
use ssmr_core::reduced::{
    basin_widths_1d, detect_heteroclinic, detect_limit_cycle, estimate_eta_dot, fit_parametric_reduced,
    fit_reduced, lyapunov_type_numbers, nmte, reduced_fixed_points, type_number_scan, ChartRestricted,
    CycleOptions, DerivativeScheme, EtaSamples, HeteroclinicOptions, RhoBound, RootSearchOptions,
};
use ssmr_core::simulate::{
    integrate, sample_bounded_gaussian, trim_time, InputSchedule, IntegrateOptions, NoiseSpec, Trajectory,
};
use ssmr_core::ssm::{fit_ssm_data, ssm_taylor, SsmChart};
use ssmr_core::steady::{continuation_scan, newton, select_slow_subspace, ContinuationOptions, NewtonOptions, SpectralDecomposition, Stability};
use ssmr_core::VectorField;
use std::f64::consts::PI;
use std::path::Path;
use std::process::Command;
use std::time::Instant;

type Outcome = Result<String, String>;

fn fast_rates(n: usize, base: f64) -> DVector<f64> {
    DVector::from_fn(n, |k, _| -base - 0.37 * k as f64)
}

fn none(n: usize) -> DVector<f64> {
    DVector::zeros(n)
}

fn slow_basis<F: VectorField>(field: &F, x0: &DVector<f64>, u: &DVector<f64>, d: usize) -> DMatrix<f64> {
    let spec = SpectralDecomposition::new(&field.eval_jacobian(x0, u)).expect("spectrum");
    select_slow_subspace(&spec, Some(d), true).expect("slow subspace").v_e
}

fn run<F: VectorField>(field: &F, x0: &DVector<f64>, u: &DVector<f64>, dt: f64, t_end: f64) -> Trajectory {
    let schedule = if u.is_empty() {
        InputSchedule::zero(0)
    } else {
        InputSchedule::constant(0.0, u.clone())
    };
    integrate(field, x0, &schedule, &IntegrateOptions::new(dt, t_end)).expect("integration")
}

fn ensure(cond: bool, msg: String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg)
    }
}

fn quadratic() -> PolynomialSystem {
    PolynomialSystem::builder(2, 0)
        .term(0, -1.0, &[1, 0])
        .term(1, -10.0, &[0, 1])
        .term(1, 1.0, &[2, 0])
        .build()
        .unwrap()
}

struct QuadraticSetup {
    sys: Embedded<PolynomialSystem>,
    v_e: DMatrix<f64>,
    train: Vec<Trajectory>,
    test: Vec<Trajectory>,
    data_chart: SsmChart,
    taylor_chart: SsmChart,
}

fn quadratic_setup() -> QuadraticSetup {
    let sys = Embedded::random(quadratic(), fast_rates(48, 12.5), 7);
    let x0 = none(50);
    let v_e = slow_basis(&sys, &x0, &none(0), 1);
    let mut train = Vec::new();
    let mut test = Vec::new();
    for k in 0..14 {
        let r = [-3.0, -2.4, -1.8, -1.2, -0.6, 0.6, 1.2, 1.8, 2.4, 3.0, -2.7, -0.9, 1.5, 2.7][k];
        let start = sys.embed_point(&DVector::from_vec(vec![r, r * r / 8.0])) + sys.axis(2 + k) * 0.1;
        let tr = trim_time(&run(&sys, &start, &none(0), 0.01, 6.0), 1.0).unwrap();
        if k < 10 {
            train.push(tr);
        } else {
            test.push(tr);
        }
    }
    let data_chart = fit_ssm_data(&train, &x0, &v_e, 2).unwrap();
    let taylor_chart = ssm_taylor(&sys, &x0, &none(0), &v_e, 2).unwrap().chart;
    QuadraticSetup {
        sys,
        v_e,
        train,
        test,
        data_chart,
        taylor_chart,
    }
}

fn criterion_1(q: &QuadraticSetup) -> Outcome {
    let b = q.sys.axis(1);
    let cd = q.data_chart.coefficient(&[2]).unwrap();
    let ct = q.taylor_chart.coefficient(&[2]).unwrap();
    let ed = (cd.dot(&b) - 0.125).abs();
    let et = (ct.dot(&b) - 0.125).abs();
    let agree = (&q.data_chart.h - &q.taylor_chart.h).amax();
    ensure(ed < 1e-3, format!("data coefficient off by {ed:e}"))?;
    ensure(et < 1e-3, format!("Taylor coefficient off by {et:e}"))?;
    ensure(agree < 1e-3, format!("charts differ by {agree:e}"))?;
    ensure((q.v_e.column(0).dot(&q.sys.axis(0)).abs() - 1.0).abs() < 1e-10, "slow direction misidentified".into())?;
    Ok(format!("|c_data - 1/8| = {ed:.2e}, |c_taylor - 1/8| = {et:.2e}, max |H_data - H_taylor| = {agree:.2e}"))
}

fn criterion_2(q: &QuadraticSetup) -> Outcome {
    let samples = estimate_eta_dot(&q.train, &q.data_chart, DerivativeScheme::Central4).map_err(|e| e.to_string())?;
    let model = fit_reduced(&samples, 2, None).map_err(|e| e.to_string())?;
    let report = nmte(&model, &q.data_chart, &q.test).map_err(|e| e.to_string())?;
    ensure(report.nmte < 1e-2, format!("NMTE {:e}", report.nmte))?;
    let roots = reduced_fixed_points(&model, &[(-1.0, 1.0)], &RootSearchOptions::default()).map_err(|e| e.to_string())?;
    ensure(roots.len() == 1, format!("{} reduced fixed points", roots.len()))?;
    let full = newton(&q.sys, &none(0), &(q.sys.axis(0) * 0.3), &NewtonOptions::default()).ok_or("Newton failed")?;
    let gap = (q.data_chart.lift(&roots[0].eta) - &full).amax();
    ensure(gap < 1e-6, format!("lifted fixed point off by {gap:e}"))?;
    Ok(format!("NMTE = {:.2e}, |lift(eta*) - x*| = {gap:.2e}", report.nmte))
}

fn bistable() -> Embedded<PolynomialSystem> {
    let inner = PolynomialSystem::builder(2, 1)
        .term(0, 1.0, &[0, 0, 1])
        .term(0, 1.0, &[1, 0, 0])
        .term(0, -1.0, &[3, 0, 0])
        .term(1, -4.0, &[0, 1, 0])
        .term(1, 1.0, &[2, 0, 0])
        .build()
        .unwrap();
    Embedded::random(inner, fast_rates(48, 8.5), 21)
}

fn bistable_samples(sys: &Embedded<PolynomialSystem>, chart: &SsmChart, mu: f64) -> (Vec<Trajectory>, EtaSamples) {
    let u = DVector::from_element(1, mu);
    let trs: Vec<Trajectory> = (0..16)
        .map(|k| {
            let s = -1.6 + 3.2 * (k as f64 + 0.5) / 16.0;
            let start = sys.embed_point(&DVector::from_vec(vec![s, 0.0])) + sys.axis(2 + k) * 0.05;
            trim_time(&run(sys, &start, &u, 0.01, 8.0), 1.0).unwrap()
        })
        .collect();
    let samples = estimate_eta_dot(&trs, chart, DerivativeScheme::Central4).unwrap();
    (trs, samples)
}

fn criterion_3() -> Outcome {
    let sys = bistable();
    let x0 = none(50);
    let u0 = none(1);
    let mut v_e = slow_basis(&sys, &x0, &u0, 1);
    if v_e.column(0).dot(&sys.axis(0)) < 0.0 {
        v_e = -v_e;
    }
    let linear = SsmChart::linear(x0.clone(), v_e.clone(), 2);
    let (trs, samples) = bistable_samples(&sys, &linear, 0.0);
    let chart = fit_ssm_data(&trs, &x0, &v_e, 3).map_err(|e| e.to_string())?;
    let model = fit_reduced(&samples, 3, None).map_err(|e| e.to_string())?;
    let roots = reduced_fixed_points(&model, &[(-2.0, 2.0)], &RootSearchOptions::default()).map_err(|e| e.to_string())?;
    let kinds: Vec<Stability> = roots.iter().map(|r| r.stability).collect();
    ensure(
        kinds == [Stability::Stable, Stability::Unstable, Stability::Stable],
        format!("reduced fixed points {kinds:?}"),
    )?;
    for (r, want) in roots.iter().zip([-1.0, 0.0, 1.0]) {
        ensure((r.eta[0] - want).abs() < 1e-3, format!("root at {} instead of {want}", r.eta[0]))?;
    }

    let mus = [-0.3, -0.15, 0.0, 0.15, 0.3];
    let by_mu: Vec<(f64, EtaSamples)> = mus.iter().map(|&mu| (mu, bistable_samples(&sys, &chart, mu).1)).collect();
    let param = fit_parametric_reduced(&by_mu, "mu", 0.0, 3, None).map_err(|e| e.to_string())?;
    let mut seps = Vec::new();
    for k in 0..21 {
        let mu = -0.3 + 0.6 * k as f64 / 20.0;
        let b = basin_widths_1d(&param.at(mu), (-2.0, 2.0), &RootSearchOptions::default()).map_err(|e| e.to_string())?;
        ensure(b.separators.len() == 1, format!("{} separators at mu = {mu}", b.separators.len()))?;
        seps.push(b.separators[0]);
    }
    ensure(seps.windows(2).all(|w| w[1] < w[0]), format!("separators not monotone: {seps:?}"))?;

    let plane = PlaneSpec::new(x0.clone(), sys.axis(0), sys.axis(1), [21, 5], [(-1.0, 1.0), (-0.5, 0.5)])
        .map_err(|e| e.to_string())?;
    let field = ftle_field(&sys, &u0, &plane, &FtleOptions::new(0.02, 4.0)).map_err(|e| e.to_string())?;
    let ridges = extract_ridges(&field, 0.9).map_err(|e| e.to_string())?;
    let cells: Vec<(usize, usize)> = ridges.iter().flat_map(|r| r.cells.iter().copied()).collect();
    ensure(!cells.is_empty(), "no FTLE ridge".into())?;
    let worst = cells.iter().map(|&(i, _)| (i as i64 - 10).abs()).max().unwrap();
    ensure(worst <= 1, format!("ridge cell {worst} columns from the separator"))?;
    Ok(format!(
        "roots {:.4}/{:.4}/{:.4}, separator {:.4} -> {:.4} over 21 mu, ridge {} cells within {worst} column",
        roots[0].eta[0],
        roots[1].eta[0],
        roots[2].eta[0],
        seps[0],
        seps[20],
        cells.len()
    ))
}

const HOPF_GAMMA: f64 = 4.0;

fn hopf() -> Embedded<PolynomialSystem> {
    let g = HOPF_GAMMA;
    let w0 = 2.0 * PI * 1.9 - g * 0.25;
    let inner = PolynomialSystem::builder(3, 1)
        .term(0, 0.25, &[1, 0, 0, 0])
        .term(0, 1.0, &[1, 0, 0, 1])
        .term(0, -w0, &[0, 1, 0, 0])
        .term(0, -g, &[2, 1, 0, 0])
        .term(0, -g, &[0, 3, 0, 0])
        .term(0, -1.0, &[3, 0, 0, 0])
        .term(0, -1.0, &[1, 2, 0, 0])
        .term(1, w0, &[1, 0, 0, 0])
        .term(1, 0.25, &[0, 1, 0, 0])
        .term(1, 1.0, &[0, 1, 0, 1])
        .term(1, g, &[3, 0, 0, 0])
        .term(1, g, &[1, 2, 0, 0])
        .term(1, -1.0, &[2, 1, 0, 0])
        .term(1, -1.0, &[0, 3, 0, 0])
        .term(2, -3.0, &[0, 0, 1, 0])
        .term(2, 1.0, &[2, 0, 0, 0])
        .term(2, 1.0, &[0, 2, 0, 0])
        .build()
        .unwrap();
    Embedded::random(inner, fast_rates(47, 6.5), 33)
}

/// Frequency from upward zero crossings of the first inner coordinate.
fn measured_frequency(sys: &Embedded<PolynomialSystem>, u: f64) -> f64 {
    let start = sys.embed_point(&DVector::from_vec(vec![0.3, 0.0, 0.0]));
    let tr = run(sys, &start, &DVector::from_element(1, u), 0.002, 50.0);
    let xs: Vec<f64> = tr.states.iter().map(|s| sys.axis(0).dot(s)).collect();
    let mut crossings = Vec::new();
    for k in 1..xs.len() {
        if tr.times[k] > 20.0 && xs[k - 1] < 0.0 && xs[k] >= 0.0 {
            let s = xs[k - 1] / (xs[k - 1] - xs[k]);
            crossings.push(tr.times[k - 1] + s * (tr.times[k] - tr.times[k - 1]));
        }
    }
    (crossings.len() - 1) as f64 / (crossings[crossings.len() - 1] - crossings[0])
}

fn hopf_samples(sys: &Embedded<PolynomialSystem>, chart: &SsmChart, u: f64) -> (Vec<Trajectory>, EtaSamples) {
    let trs: Vec<Trajectory> = (0..10)
        .map(|k| {
            let r = 0.1 + 0.7 * k as f64 / 9.0;
            let a = 2.0 * PI * k as f64 / 10.0;
            let start = sys.embed_point(&DVector::from_vec(vec![r * a.cos(), r * a.sin(), r * r / 3.5]))
                + sys.axis(3 + k) * 0.05;
            trim_time(&run(sys, &start, &DVector::from_element(1, u), 0.002, 4.0), 1.0).unwrap()
        })
        .collect();
    let samples = estimate_eta_dot(&trs, chart, DerivativeScheme::Central4).unwrap();
    (trs, samples)
}

fn criterion_4() -> Outcome {
    let sys = hopf();
    let x0 = none(50);
    let v_e = slow_basis(&sys, &x0, &none(1), 2);
    let linear = SsmChart::linear(x0.clone(), v_e.clone(), 2);
    let (trs, samples) = hopf_samples(&sys, &linear, 0.0);
    let chart = fit_ssm_data(&trs, &x0, &v_e, 3).map_err(|e| e.to_string())?;
    let model = fit_reduced(&samples, 3, None).map_err(|e| e.to_string())?;
    let eta0 = DVector::from_vec(vec![0.3, 0.0]);
    let cycle = detect_limit_cycle(&model, &eta0, 1e-3, 60.0, &CycleOptions::default())
        .map_err(|e| e.to_string())?
        .ok_or("no reduced limit cycle")?;
    let f_full = measured_frequency(&sys, 0.0);
    let rel = (cycle.frequency - f_full).abs() / f_full;
    ensure(rel < 0.01, format!("f_red {} vs f_full {f_full}", cycle.frequency))?;

    let inputs = [-0.1, -0.05, 0.0, 0.05, 0.1];
    let by_u: Vec<(f64, EtaSamples)> = inputs.iter().map(|&u| (u, hopf_samples(&sys, &chart, u).1)).collect();
    let param = fit_parametric_reduced(&by_u, "u", 0.0, 3, None).map_err(|e| e.to_string())?;
    let mut worst: f64 = 0.0;
    for &u in &inputs {
        let c = detect_limit_cycle(&param.at(u), &eta0, 1e-3, 60.0, &CycleOptions::default())
            .map_err(|e| e.to_string())?
            .ok_or(format!("no parametric limit cycle at u = {u}"))?;
        worst = worst.max((c.frequency - measured_frequency(&sys, u)).abs());
    }
    ensure(worst < 0.1, format!("parametric frequency error {worst}"))?;
    Ok(format!(
        "f_full = {f_full:.4}, f_red = {:.4} (rel {rel:.2e}), parametric max error {worst:.2e}",
        cycle.frequency
    ))
}

fn ring() -> GenericSystem {
    GenericSystem::new(2, 0, |x, _| {
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

fn point_segment(p: (f64, f64), a: &[f64], b: &[f64]) -> f64 {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let len2 = dx * dx + dy * dy;
    let s = if len2 > 0.0 {
        (((p.0 - a[0]) * dx + (p.1 - a[1]) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    ((p.0 - a[0] - s * dx).powi(2) + (p.1 - a[1] - s * dy).powi(2)).sqrt()
}

fn criterion_5() -> Outcome {
    let sys = Embedded::random(ring(), fast_rates(48, 5.0), 55);
    let v_e = DMatrix::from_columns(&[sys.axis(0), sys.axis(1)]);
    let chart = SsmChart::linear(none(50), v_e, 2);
    let restricted = ChartRestricted::new(&sys, &chart, none(0));
    let domain = [(-1.5, 1.5), (-1.5, 1.5)];
    let fixed = reduced_fixed_points(&restricted, &domain, &RootSearchOptions::default()).map_err(|e| e.to_string())?;
    let report = detect_heteroclinic(&restricted, &fixed, &domain, &HeteroclinicOptions::default()).map_err(|e| e.to_string())?;
    ensure(report.is_loop, "no closed loop".into())?;
    ensure(report.branches.len() == 2, format!("{} branches", report.branches.len()))?;
    let poly = report.loop_polyline.ok_or("loop without polyline")?;
    let off_circle = poly
        .iter()
        .map(|p| ((p[0] * p[0] + p[1] * p[1]).sqrt() - 1.0).abs())
        .fold(0.0, f64::max);
    let mut coverage: f64 = 0.0;
    for k in 0..3600 {
        let a = 2.0 * PI * k as f64 / 3600.0;
        let p = (a.cos(), a.sin());
        let d = poly
            .windows(2)
            .map(|w| point_segment(p, &w[0], &w[1]))
            .fold(f64::INFINITY, f64::min);
        coverage = coverage.max(d);
    }
    let hausdorff = off_circle.max(coverage);
    ensure(hausdorff < 1e-3, format!("Hausdorff distance {hausdorff:e}"))?;
    let tn = lyapunov_type_numbers(&[-0.0496, -5.0213], &[0]).map_err(|e| e.to_string())?;
    ensure(tn.nu < 1.0, format!("nu = {}", tn.nu))?;
    let rho = match tn.rho {
        Some(RhoBound::Finite(r)) => r,
        other => return Err(format!("rho = {other:?}")),
    };
    ensure(rho >= 101, format!("rho = {rho}"))?;
    Ok(format!("two-branch loop, Hausdorff distance {hausdorff:.2e}, nu = {:.4}, rho = {rho}", tn.nu))
}

fn criterion_6() -> Outcome {
    let inner = PolynomialSystem::builder(2, 1)
        .term(0, 1.0, &[0, 0, 1])
        .term(0, 1.0, &[2, 0, 0])
        .term(1, -3.0, &[0, 1, 0])
        .term(1, 1.0, &[2, 0, 0])
        .build()
        .unwrap();
    let sys = Embedded::random(inner, fast_rates(48, 7.5), 66);
    let seeds = [
        sys.embed_point(&DVector::from_vec(vec![-1.0, 1.0 / 3.0])),
        sys.embed_point(&DVector::from_vec(vec![1.0, 1.0 / 3.0])),
    ];
    let a0 = sys.axis(0);
    let (lo, hi, steps) = (-1.0, 0.5, 31);
    let diagram = continuation_scan(
        &sys,
        &none(1),
        &DVector::from_element(1, 1.0),
        (lo, hi),
        steps,
        &seeds,
        |x| a0.dot(x),
        &ContinuationOptions::default(),
    )
    .map_err(|e| e.to_string())?;
    let step = (hi - lo) / (steps - 1) as f64;
    ensure(diagram.n_branches == 2, format!("{} branches", diagram.n_branches))?;
    ensure(diagram.events.len() == 1, format!("{} events", diagram.events.len()))?;
    let ev = &diagram.events[0];
    let mid = 0.5 * (ev.mu_lo + ev.mu_hi);
    ensure(mid.abs() <= step + 1e-12, format!("event at mu = {mid}"))?;
    ensure(ev.eigenvalue_confirmed, format!("event eigenvalue {} not near zero", ev.re_lambda_nearest_zero))?;
    let scan = type_number_scan(&sys, &diagram, 1).map_err(|e| e.to_string())?;
    ensure(scan.sup_nu < 1.0 && scan.sup_sigma < 1.0, format!("sup nu {}, sup sigma {}", scan.sup_nu, scan.sup_sigma))?;
    Ok(format!(
        "saddle-node in [{:.3}, {:.3}], sup nu = {:.3e}, sup sigma = {:.3}",
        ev.mu_lo, ev.mu_hi, scan.sup_nu, scan.sup_sigma
    ))
}

fn tanh_network() -> RnnModel {
    let w = random_orthogonal(10, 70) * 0.5;
    let b = random_orthogonal(10, 71).columns(0, 1).into_owned();
    let y = random_orthogonal(10, 72).columns(0, 1).transpose();
    let bias = random_orthogonal(10, 73).column(0) * 0.4;
    RnnModel::vanilla(1.0, w, b, y).unwrap().with_bias(bias).unwrap()
}

fn slope(xs: &[f64], ys: &[f64]) -> f64 {
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = xs.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    num / den
}

fn anchor_errors<F: VectorField>(field: &F, x0: &DVector<f64>, eps: f64, order: usize, t_end: f64) -> Result<Vec<f64>, String> {
    let opts = IntegrateOptions::new(0.01, t_end).with_noise(NoiseSpec::new(eps, 2024));
    let tr = integrate(field, x0, &InputSchedule::zero(field.n_inputs()), &opts).map_err(|e| e.to_string())?;
    let forcing = ForcingRecord::from_trajectory(&tr, eps).map_err(|e| e.to_string())?;
    let exp = anchor_expansion(field, x0, &none(field.n_inputs()), &forcing, order).map_err(|e| e.to_string())?;
    let idx = exp.valid_indices();
    if idx.is_empty() {
        return Err("empty validity window".into());
    }
    Ok((1..=order)
        .map(|nu| {
            idx.iter()
                .map(|&k| (&tr.states[k] - exp.composite(nu, k)).amax())
                .fold(0.0, f64::max)
        })
        .collect())
}

fn criterion_7() -> Outcome {
    let net = tanh_network();
    let u = none(1);
    let x0 = newton(&net, &u, &none(10), &NewtonOptions::default()).ok_or("no fixed point")?;
    let epss = [0.04, 0.02, 0.01, 0.005];
    let mut errs = vec![Vec::new(); 3];
    for &eps in &epss {
        let e = anchor_errors(&net, &x0, eps, 3, 260.0)?;
        for nu in 0..3 {
            errs[nu].push(e[nu]);
        }
    }
    let slopes: Vec<f64> = errs.iter().map(|e| slope(&epss, e)).collect();
    ensure((slopes[0] - 2.0).abs() <= 0.3, format!("order-1 slope {}", slopes[0]))?;
    ensure((slopes[1] - 3.0).abs() <= 0.3, format!("order-2 slope {}", slopes[1]))?;

    let a = net.eval_jacobian(&x0, &u);
    let mut builder = PolynomialSystem::builder(10, 0);
    for i in 0..10 {
        for j in 0..10 {
            let mut ex = vec![0u32; 10];
            ex[j] = 1;
            builder = builder.term(i, a[(i, j)], &ex);
        }
    }
    let linear = builder.build().map_err(|e| e.to_string())?;
    let lin_err = anchor_errors(&linear, &none(10), 0.01, 1, 120.0)?[0];
    ensure(lin_err < 1e-6, format!("linear order-1 error {lin_err:e}"))?;
    Ok(format!(
        "slopes {:.3}/{:.3}/{:.3} (orders 1/2/3), linear order-1 error {lin_err:.2e}",
        slopes[0], slopes[1], slopes[2]
    ))
}

fn rerun_identical(dir: &Path) -> Result<usize, String> {
    let bin = env!("CARGO_BIN_EXE_ssmr");
    let model = dir.join("model.json");
    let json = serde_json::json!({
        "dim": 2, "n_inputs": 0,
        "terms": [
            {"component": 0, "coeff": -1.0, "exponents": [1, 0]},
            {"component": 1, "coeff": -10.0, "exponents": [0, 1]},
            {"component": 1, "coeff": 1.0, "exponents": [2, 0]},
        ]
    });
    std::fs::write(&model, json.to_string()).map_err(|e| e.to_string())?;
    let first = dir.join("first");
    let cfg = dir.join("cfg.json");
    let config = serde_json::json!({
        "model": model, "output_dir": first, "seed": 5,
        "simulation": {"t_end": 3.0, "n_traj": 4, "noise_amplitude": 0.01},
    });
    std::fs::write(&cfg, config.to_string()).map_err(|e| e.to_string())?;
    let ok = |args: &[&str]| -> Result<(), String> {
        let o = Command::new(bin).args(args).output().map_err(|e| e.to_string())?;
        ensure(o.status.success(), String::from_utf8_lossy(&o.stderr).into_owned())
    };
    ok(&["simulate", "-c", cfg.to_str().unwrap()])?;
    let second = dir.join("second");
    ok(&["simulate", "-c", first.join("run.json").to_str().unwrap(), "-o", second.to_str().unwrap()])?;
    let mut n = 0;
    for entry in std::fs::read_dir(&first).map_err(|e| e.to_string())? {
        let p = entry.map_err(|e| e.to_string())?.path();
        if p.extension().is_some_and(|e| e == "csv") {
            let name = p.file_name().unwrap();
            let a = std::fs::read(&p).map_err(|e| e.to_string())?;
            let b = std::fs::read(second.join(name)).map_err(|e| e.to_string())?;
            ensure(a == b, format!("{name:?} differs between runs"))?;
            n += 1;
        }
    }
    ensure(n > 0, "no CSV artifacts".into())?;
    Ok(n)
}

fn criterion_8(q: &QuadraticSetup) -> Outcome {
    let net = tanh_network();
    let x = DVector::from_fn(10, |i, _| 0.3 * (i as f64 - 4.5) / 4.5);
    let u = DVector::from_element(1, 0.2);
    let j = net.eval_jacobian(&x, &u);
    let jac_rel = (&j - fd_jacobian(&net, &x, &u)).norm() / j.norm();
    ensure(jac_rel < 1e-6, format!("Jacobian relative error {jac_rel:e}"))?;

    let logistic = GenericSystem::new(1, 0, |x, _| DVector::from_element(1, x[0] * (1.0 - x[0])));
    let exact = 1.0 / (1.0 + 9.0 * (-2.0f64).exp());
    let dts = [0.2, 0.1, 0.05, 0.025];
    let errs: Vec<f64> = dts
        .iter()
        .map(|&dt| (run(&logistic, &DVector::from_element(1, 0.1), &none(0), dt, 2.0).last()[0] - exact).abs())
        .collect();
    let rk_slope = slope(&dts, &errs);
    ensure((rk_slope - 4.0).abs() <= 0.3, format!("RK4 slope {rk_slope}"))?;

    let saddle = PolynomialSystem::builder(2, 0)
        .term(0, 1.0, &[1, 0])
        .term(1, -1.0, &[0, 1])
        .build()
        .unwrap();
    let plane = PlaneSpec::axes(none(2), 0, 1, [5, 5], [(-0.5, 0.5), (-0.5, 0.5)]).map_err(|e| e.to_string())?;
    let f = ftle_field(&saddle, &none(0), &plane, &FtleOptions::new(0.01, 2.0)).map_err(|e| e.to_string())?;
    let ftle_err = f
        .values
        .iter()
        .flatten()
        .map(|v| v.map_or(f64::INFINITY, |v| (v - 1.0).abs()))
        .fold(0.0, f64::max);
    ensure(ftle_err <= 1e-3, format!("saddle FTLE off by {ftle_err:e}"))?;

    let spec = NoiseSpec::new(0.2, 9);
    let draws = sample_bounded_gaussian(&spec, 20000, 5);
    let noise_max = draws.iter().map(|d| d.amax()).fold(0.0, f64::max);
    ensure(noise_max <= 3.0 * 0.2, format!("noise sample {noise_max} beyond 3 sigma"))?;

    let mut lift_err: f64 = 0.0;
    for k in 0..200 {
        let eta = DVector::from_element(1, -3.0 + 6.0 * k as f64 / 199.0);
        lift_err = lift_err.max((q.data_chart.project(&q.data_chart.lift(&eta)) - &eta).amax());
    }
    ensure(lift_err <= 1e-12, format!("project(lift) error {lift_err:e}"))?;

    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let n = rerun_identical(dir.path())?;
    Ok(format!(
        "Jacobian rel {jac_rel:.1e}, RK4 slope {rk_slope:.3}, FTLE error {ftle_err:.1e}, noise max {:.3} sigma, lift/project {lift_err:.1e}, {n} CSVs identical",
        noise_max / 0.2
    ))
}

fn main() {
    let names = [
        "analytic slow-manifold recovery",
        "reduced-model fidelity",
        "bistable decision analogue",
        "limit-cycle frequency",
        "heteroclinic ring",
        "saddle-node scan",
        "anchor expansion convergence",
        "numerical hygiene suite",
    ];
    let limits = [10.0, 60.0, 120.0, 120.0, 60.0, 60.0, 60.0, 60.0];
    let mut failed = 0;
    let mut report = |k: usize, outcome: Outcome, secs: f64| {
        let outcome = outcome.and_then(|m| {
            ensure(secs < limits[k], format!("runtime {secs:.1} s exceeds {} s", limits[k])).map(|_| m)
        });
        match outcome {
            Ok(m) => println!("PASS criterion {} ({}): {m} [{secs:.2} s]", k + 1, names[k]),
            Err(m) => {
                failed += 1;
                println!("FAIL criterion {} ({}): {m} [{secs:.2} s]", k + 1, names[k]);
            }
        }
    };

    let t = Instant::now();
    let q = quadratic_setup();
    let setup = t.elapsed().as_secs_f64();
    let t = Instant::now();
    let c1 = criterion_1(&q);
    report(0, c1, setup + t.elapsed().as_secs_f64());
    let t = Instant::now();
    let c2 = criterion_2(&q);
    report(1, c2, setup + t.elapsed().as_secs_f64());
    let criteria: [fn() -> Outcome; 5] = [criterion_3, criterion_4, criterion_5, criterion_6, criterion_7];
    for (i, c) in criteria.iter().enumerate() {
        let t = Instant::now();
        let outcome = c();
        report(i + 2, outcome, t.elapsed().as_secs_f64());
    }
    let t = Instant::now();
    let c8 = criterion_8(&q);
    report(7, c8, t.elapsed().as_secs_f64());

    if failed > 0 {
        println!("{failed} of 8 criteria failed");
        std::process::exit(1);
    }
    println!("all 8 criteria passed");
}
