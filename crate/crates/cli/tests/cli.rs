use serde_json::{json, Value};
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn ssmr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ssmr"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, v: &Value) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, serde_json::to_string_pretty(v).unwrap()).unwrap();
    p
}

fn run_cmd(cmd: &str, config: &Path) -> Output {
    ssmr(&[cmd, "--config", config.to_str().unwrap()])
}

fn decay_rnn(n: usize) -> Value {
    let zeros = vec![vec![0.0; n]; n];
    json!({
        "n_units": n, "n_inputs": 1, "n_outputs": 1, "tau": 1.0,
        "variant": "vanilla", "activation": "tanh",
        "W": zeros, "B": vec![vec![0.0]; n], "Y": [vec![1.0; n]],
    })
}

fn quadratic_poly() -> Value {
    json!({
        "dim": 2, "n_inputs": 0,
        "terms": [
            {"component": 0, "coeff": -1.0, "exponents": [1, 0]},
            {"component": 1, "coeff": -10.0, "exponents": [0, 1]},
            {"component": 1, "coeff": 1.0, "exponents": [2, 0]},
        ]
    })
}

fn read_rows(p: &Path) -> Vec<Vec<f64>> {
    let text = std::fs::read_to_string(p).unwrap();
    text.lines()
        .skip(1)
        .map(|l| l.split(',').map(|v| v.parse().unwrap()).collect())
        .collect()
}

#[test]
fn simulate_decay_matches_exponential() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "model.json", &decay_rnn(3));
    let out = dir.path().join("out");
    let cfg = write(
        dir.path(),
        "run.json",
        &json!({
            "model": model, "output_dir": out,
            "simulation": {"dt": 0.01, "t_end": 2.0, "n_traj": 2,
                           "init": {"kind": "points", "points": [[1.0, -2.0, 0.5]]}},
        }),
    );
    let o = run_cmd("simulate", &cfg);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_rows(&out.join("traj_000.csv"));
    let last = rows.last().unwrap();
    assert!((last[0] - 2.0).abs() < 1e-12);
    let x0 = [1.0, -2.0, 0.5];
    for i in 0..3 {
        assert!((last[i + 1] - (-2.0f64).exp() * x0[i]).abs() < 1e-8);
    }
    let record: Value = serde_json::from_str(&std::fs::read_to_string(out.join("run.json")).unwrap()).unwrap();
    assert_eq!(record["command"], "simulate");
    assert_eq!(record["config"]["simulation"]["n_traj"], 2);
    assert_eq!(record["config"]["simulation"]["split_fraction"], 0.8);
    assert!(record["versions"]["ssmr-core"].is_string());
    assert!(out.join("manifest.json").is_file());
}

#[test]
fn fit_ssm_recovers_quadratic_coefficient() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "model.json", &quadratic_poly());
    let out = dir.path().join("out");
    let cfg = write(
        dir.path(),
        "cfg.json",
        &json!({
            "model": model, "output_dir": out,
            "simulation": {"dt": 0.01, "t_end": 8.0, "n_traj": 10, "transient": 2.0,
                           "init": {"kind": "ball", "center": [0.0, 0.0], "radius": 3.0}},
            "ssm": {"d": 1, "order": 2},
        }),
    );
    let o = run_cmd("fit-ssm", &cfg);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let chart = ssmr_core::ssm::SsmChart::load(out.join("chart.json")).unwrap();
    let c = chart.coefficient(&[2]).unwrap();
    assert!((c[1] - 0.125).abs() < 1e-3, "{c}");
    let text = std::fs::read_to_string(out.join("chart.json")).unwrap();
    assert!(text.contains("grlex-desc-first"));
}

#[test]
fn missing_model_exits_2_naming_path() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "cfg.json", &json!({"model": "/nonexistent/model.json"}));
    let o = run_cmd("simulate", &cfg);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("/nonexistent/model.json"));
}

#[test]
fn unknown_field_and_bad_override_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "model.json", &decay_rnn(2));
    let cfg = write(dir.path(), "cfg.json", &json!({"model": model, "simulaton": {}}));
    assert_eq!(run_cmd("simulate", &cfg).status.code(), Some(2));
    let cfg = write(dir.path(), "cfg2.json", &json!({"model": model}));
    let o = ssmr(&["simulate", "--config", cfg.to_str().unwrap(), "--set", "seed.x=1"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn divergence_exits_3_with_stage() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(
        dir.path(),
        "model.json",
        &json!({"dim": 1, "n_inputs": 0, "terms": [{"component": 0, "coeff": 1.0, "exponents": [2]}]}),
    );
    let cfg = write(
        dir.path(),
        "cfg.json",
        &json!({
            "model": model, "output_dir": dir.path().join("out"),
            "simulation": {"t_end": 5.0, "n_traj": 2, "init": {"kind": "ball", "center": [2.0], "radius": 0.1}},
        }),
    );
    let o = run_cmd("simulate", &cfg);
    assert_eq!(o.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&o.stderr).contains("stage `simulate`"));
}

#[test]
fn rerun_from_record_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "model.json", &quadratic_poly());
    let a = dir.path().join("a");
    let cfg = write(
        dir.path(),
        "cfg.json",
        &json!({
            "model": model, "output_dir": a, "seed": 11,
            "simulation": {"dt": 0.01, "t_end": 4.0, "n_traj": 6, "noise_amplitude": 0.01},
            "ssm": {"d": 1, "order": 3},
            "reduced": {"order": 3},
        }),
    );
    assert!(run_cmd("fit-reduced", &cfg).status.success());
    let b = dir.path().join("b");
    let o = ssmr(&[
        "fit-reduced",
        "--config",
        a.join("run.json").to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["chart.json", "reduced_model.json", "residual_curve.csv", "nmte.json", "mfe.json"] {
        let x = std::fs::read(a.join(f)).unwrap();
        let y = std::fs::read(b.join(f)).unwrap();
        assert_eq!(x, y, "{f} differs");
    }
}

#[test]
fn export_surface_shapes_and_zero_field_at_origin() {
    let dir = tempfile::tempdir().unwrap();
    let model = write(dir.path(), "model.json", &quadratic_poly());
    let fit = dir.path().join("fit");
    let cfg = write(
        dir.path(),
        "cfg.json",
        &json!({
            "model": model, "output_dir": fit,
            "simulation": {"t_end": 8.0, "n_traj": 8, "transient": 2.0,
                           "init": {"kind": "ball", "center": [0.0, 0.0], "radius": 3.0}},
            "ssm": {"d": 1, "order": 2}, "reduced": {"order": 2},
        }),
    );
    assert!(run_cmd("fit-reduced", &cfg).status.success());
    let exp = dir.path().join("exp");
    let cfg = write(
        dir.path(),
        "exp.json",
        &json!({
            "output_dir": exp,
            "export": {"chart": fit.join("chart.json"), "reduced": fit.join("reduced_model.json"), "n": 21},
        }),
    );
    let o = run_cmd("export-surface", &cfg);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let surf = read_rows(&exp.join("surface.csv"));
    assert_eq!(surf.len(), 21);
    let field = read_rows(&exp.join("field.csv"));
    let origin = field.iter().find(|r| r[0] == 0.0).unwrap();
    assert!(origin[1].abs() < 1e-6);

    let v = json!([[1.0, 0.0], [0.0, 1.0], [0.0, 0.0]]);
    let chart2 = write(
        dir.path(),
        "chart2.json",
        &json!({
            "anchor": [0.0, 0.0, 0.0], "V_E": v,
            "basis": {"d": 2, "degree_min": 2, "degree_max": 2, "ordering": "grlex-desc-first"},
            "H": [[0.0, 0.0, 0.0], [0.0, 0.0, 0.0], [1.0, 0.0, 1.0]],
        }),
    );
    let exp2 = dir.path().join("exp2");
    let cfg = write(dir.path(), "exp2.json", &json!({"output_dir": exp2, "export": {"chart": chart2}}));
    let o = run_cmd("export-surface", &cfg);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let surf = read_rows(&exp2.join("surface.csv"));
    assert_eq!(surf.len(), 2500);
    for r in &surf {
        assert!((r[4] - (r[0] * r[0] + r[1] * r[1])).abs() < 1e-12);
    }
}

#[test]
fn continuation_ftle_and_anchor_commands_run() {
    let dir = tempfile::tempdir().unwrap();
    let fold = json!({
        "dim": 2, "n_inputs": 1,
        "terms": [
            {"component": 0, "coeff": 1.0, "exponents": [0, 0, 1]},
            {"component": 0, "coeff": 1.0, "exponents": [2, 0, 0]},
            {"component": 1, "coeff": -3.0, "exponents": [0, 1, 0]},
        ]
    });
    let model = write(dir.path(), "fold.json", &fold);
    let out = dir.path().join("cont");
    let cfg = write(
        dir.path(),
        "cont.json",
        &json!({
            "model": model, "output_dir": out,
            "continuation": {"mu_range": [-1.0, 0.5], "n_steps": 16, "readout": "x0",
                             "seeds": [[-1.0, 0.0], [1.0, 0.0]]},
        }),
    );
    let o = run_cmd("continuation", &cfg);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let events: Value = serde_json::from_str(&std::fs::read_to_string(out.join("events.json")).unwrap()).unwrap();
    assert_eq!(events.as_array().unwrap().len(), 1);
    assert_eq!(events[0]["type"], "saddle-node");
    assert!(out.join("type_numbers.csv").is_file());

    let bistable = json!({
        "dim": 2, "n_inputs": 0,
        "terms": [
            {"component": 0, "coeff": 1.0, "exponents": [1, 0]},
            {"component": 0, "coeff": -1.0, "exponents": [3, 0]},
            {"component": 1, "coeff": -5.0, "exponents": [0, 1]},
        ]
    });
    let model = write(dir.path(), "bistable.json", &bistable);
    let out = dir.path().join("ftle");
    let cfg = write(
        dir.path(),
        "ftle.json",
        &json!({
            "model": model, "output_dir": out,
            "ftle": {"plane": {"kind": "axes", "axes": [0, 1]}, "n": [21, 5], "horizon": 4.0, "dt": 0.02, "quantile": 0.9},
        }),
    );
    let o = run_cmd("ftle", &cfg);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let ridges = read_rows(&out.join("ridges.csv"));
    assert!(!ridges.is_empty());
    assert!(ridges.iter().all(|r| r[3].abs() < 0.1 + 1e-12));

    let out = dir.path().join("anchor");
    let cfg = write(
        dir.path(),
        "anchor.json",
        &json!({
            "model": model, "output_dir": out,
            "ssm": {"anchor_seed": [1.0, 0.0]},
            "anchor": {"epsilon": 0.01, "order": 2, "t_end": 20.0},
        }),
    );
    let o = run_cmd("anchor", &cfg);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("anchor_order2.csv").is_file());
    assert!(out.join("h11.csv").is_file());
}
