//! Run configuration: one JSON document with optional analysis blocks.

use serde::{Deserialize, Serialize};
use serde_json::Value;
use ssmr_core::error::{Error, Result};
use ssmr_core::ftle::PlaneSpec;
use ssmr_core::reduced::{DerivativeScheme, PortraitOptions};
use ssmr_core::simulate::{InitSampler, InputSchedule};
use ssmr_core::steady::{ContinuationOptions, NewtonOptions};
use std::path::{Path, PathBuf};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub model: Option<PathBuf>,
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Zero input when absent.
    #[serde(default)]
    pub input: Option<InputSchedule>,
    #[serde(default)]
    pub simulation: Option<SimulationBlock>,
    #[serde(default)]
    pub fixed_points: Option<FixedPointsBlock>,
    #[serde(default)]
    pub ssm: Option<SsmBlock>,
    #[serde(default)]
    pub reduced: Option<ReducedBlock>,
    #[serde(default)]
    pub portrait: Option<PortraitBlock>,
    #[serde(default)]
    pub ftle: Option<FtleBlock>,
    #[serde(default)]
    pub anchor: Option<AnchorBlock>,
    #[serde(default)]
    pub continuation: Option<ContinuationBlock>,
    #[serde(default)]
    pub export: Option<ExportBlock>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("ssmr_out")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationBlock {
    pub dt: f64,
    pub t_end: f64,
    pub n_traj: usize,
    pub split_fraction: f64,
    pub noise_amplitude: f64,
    pub noise_bound: f64,
    /// Ball of radius 0.5 around the anchor fixed point when absent.
    pub init: Option<InitSampler>,
    /// Leading time dropped from every trajectory before fitting.
    pub transient: f64,
}

impl Default for SimulationBlock {
    fn default() -> Self {
        Self {
            dt: 0.01,
            t_end: 20.0,
            n_traj: 20,
            split_fraction: 0.8,
            noise_amplitude: 0.0,
            noise_bound: 3.0,
            init: None,
            transient: 0.0,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FixedPointsBlock {
    pub n_seeds: usize,
    pub seed_radius: f64,
    pub extra_seeds: Vec<Vec<f64>>,
    pub newton: NewtonOptions,
}

impl Default for FixedPointsBlock {
    fn default() -> Self {
        Self {
            n_seeds: 100,
            seed_radius: 2.0,
            extra_seeds: Vec::new(),
            newton: NewtonOptions::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SsmMethod {
    Data,
    Taylor,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SsmBlock {
    /// Cut at the largest spectral gap when absent.
    pub d: Option<usize>,
    pub method: SsmMethod,
    /// Chosen by the residual-curve rule when absent.
    pub order: Option<u32>,
    pub max_order: u32,
    pub min_improvement: f64,
    /// Newton seed for the anchor fixed point (origin when absent).
    pub anchor_seed: Option<Vec<f64>>,
    pub strict_cut: bool,
}

impl Default for SsmBlock {
    fn default() -> Self {
        Self {
            d: None,
            method: SsmMethod::Data,
            order: None,
            max_order: 5,
            min_improvement: 0.1,
            anchor_seed: None,
            strict_cut: false,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ReducedBlock {
    pub order: u32,
    pub derivative_scheme: DerivativeScheme,
    pub ridge: Option<f64>,
}

impl Default for ReducedBlock {
    fn default() -> Self {
        Self {
            order: 3,
            derivative_scheme: DerivativeScheme::default(),
            ridge: None,
        }
    }
}

#[derive(Clone, Debug, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PortraitBlock {
    /// 1.5 times the training bounding box when absent.
    pub domain: Option<Vec<(f64, f64)>>,
    pub options: PortraitOptions,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PlaneChoice {
    /// Two coordinate axes.
    Axes { axes: [usize; 2] },
    /// The two slowest realified eigen-directions at the anchor.
    Slow,
    Basis { e1: Vec<f64>, e2: Vec<f64> },
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FtleBlock {
    pub plane: PlaneChoice,
    /// Anchor fixed point when absent.
    pub base: Option<Vec<f64>>,
    pub n: [usize; 2],
    pub extents: [(f64, f64); 2],
    pub horizon: f64,
    pub dt: f64,
    pub fd_step: Option<f64>,
    pub quantile: f64,
}

impl Default for FtleBlock {
    fn default() -> Self {
        Self {
            plane: PlaneChoice::Slow,
            base: None,
            n: [41, 41],
            extents: [(-1.0, 1.0), (-1.0, 1.0)],
            horizon: 5.0,
            dt: 0.01,
            fd_step: None,
            quantile: 0.95,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnchorBlock {
    pub epsilon: f64,
    pub order: usize,
    pub dt: f64,
    pub t_end: f64,
    pub noise_bound: f64,
    /// Derived from the master seed when absent.
    pub noise_seed: Option<u64>,
    pub td_coeffs: bool,
}

impl Default for AnchorBlock {
    fn default() -> Self {
        Self {
            epsilon: 0.01,
            order: 3,
            dt: 0.01,
            t_end: 100.0,
            noise_bound: 3.0,
            noise_seed: None,
            td_coeffs: true,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Readout {
    /// First network output, or the first state for polynomial models.
    Z0,
    X0,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuationBlock {
    /// First input axis when absent.
    pub direction: Option<Vec<f64>>,
    pub mu_range: (f64, f64),
    pub n_steps: usize,
    pub readout: Readout,
    pub seeds: Vec<Vec<f64>>,
    pub options: ContinuationOptions,
    /// Tangent dimension for the type-number scan.
    pub type_numbers_d: usize,
}

impl Default for ContinuationBlock {
    fn default() -> Self {
        Self {
            direction: None,
            mu_range: (-1.0, 1.0),
            n_steps: 21,
            readout: Readout::Z0,
            seeds: Vec::new(),
            options: ContinuationOptions::default(),
            type_numbers_d: 1,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExportBlock {
    pub chart: Option<PathBuf>,
    pub reduced: Option<PathBuf>,
    pub n: usize,
    /// `[-1, 1]` per chart coordinate when absent.
    pub extent: Option<Vec<(f64, f64)>>,
}

impl Default for ExportBlock {
    fn default() -> Self {
        Self {
            chart: None,
            reduced: None,
            n: 50,
            extent: None,
        }
    }
}

/// Sets `path` (dot-separated keys) in `doc` to `value`, creating objects
/// along the way.
pub fn apply_override(doc: &mut Value, path: &str, value: Value) -> Result<()> {
    let keys: Vec<&str> = path.split('.').collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(Error::Validation(format!("malformed override path `{path}`")));
    }
    let mut cur = doc;
    for (i, key) in keys.iter().enumerate() {
        if cur.is_null() {
            *cur = Value::Object(Default::default());
        }
        let obj = cur.as_object_mut().ok_or_else(|| {
            Error::Validation(format!("override `{path}`: `{}` is not an object", keys[..i].join(".")))
        })?;
        if i + 1 == keys.len() {
            obj.insert(key.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(key.to_string()).or_insert(Value::Null);
    }
    unreachable!("override path has at least one key")
}

/// `key=value` with the value read as JSON, or as a string when it is not
/// valid JSON.
pub fn parse_override(arg: &str) -> Result<(String, Value)> {
    let (k, v) = arg
        .split_once('=')
        .ok_or_else(|| Error::Validation(format!("override `{arg}` is not of the form key=value")))?;
    let value = serde_json::from_str(v).unwrap_or_else(|_| Value::String(v.to_string()));
    Ok((k.trim().to_string(), value))
}

/// Reads a config (or the `config` member of a `run.json` record), applies
/// overrides and checks that referenced files exist.
pub fn load_config(path: &Path, overrides: &[(String, Value)]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.display().to_string(),
        source: e,
    })?;
    let mut doc: Value = serde_json::from_str(&text).map_err(|e| Error::Parse {
        field: "<config>".into(),
        message: format!("{}: {e}", path.display()),
    })?;
    if let Some(inner) = doc.get("config").filter(|_| doc.get("command").is_some()) {
        doc = inner.clone();
    }
    for (k, v) in overrides {
        apply_override(&mut doc, k, v.clone())?;
    }
    let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| Error::Parse {
        field: "<config>".into(),
        message: e.to_string(),
    })?;
    cfg.check_files()?;
    Ok(cfg)
}

impl RunConfig {
    fn check_files(&self) -> Result<()> {
        let export = self.export.as_ref();
        let files = [
            self.model.as_ref(),
            export.and_then(|e| e.chart.as_ref()),
            export.and_then(|e| e.reduced.as_ref()),
        ];
        for p in files.into_iter().flatten() {
            if !p.is_file() {
                return Err(Error::Validation(format!("referenced file {} does not exist", p.display())));
            }
        }
        Ok(())
    }

    /// Absolute paths for every referenced file, so the record re-runs from
    /// any working directory.
    pub fn absolutize(&mut self) {
        let abs = |p: &mut PathBuf| {
            if let Ok(c) = std::fs::canonicalize(&*p) {
                *p = c;
            }
        };
        if let Some(m) = self.model.as_mut() {
            abs(m);
        }
        if let Some(e) = self.export.as_mut() {
            if let Some(c) = e.chart.as_mut() {
                abs(c);
            }
            if let Some(r) = e.reduced.as_mut() {
                abs(r);
            }
        }
    }
}

/// Validated plane from explicit vectors.
pub fn plane_from_vectors(
    base: Vec<f64>,
    e1: Vec<f64>,
    e2: Vec<f64>,
    n: [usize; 2],
    extents: [(f64, f64); 2],
) -> Result<PlaneSpec> {
    use nalgebra::DVector;
    PlaneSpec::new(
        DVector::from_vec(base),
        DVector::from_vec(e1),
        DVector::from_vec(e2),
        n,
        extents,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn dotted_override_creates_blocks() {
        let mut doc = json!({"seed": 1});
        apply_override(&mut doc, "simulation.dt", json!(0.5)).unwrap();
        apply_override(&mut doc, "seed", json!(7)).unwrap();
        assert_eq!(doc, json!({"seed": 7, "simulation": {"dt": 0.5}}));
        assert!(apply_override(&mut doc, "seed.x", json!(1)).is_err());
    }

    #[test]
    fn override_values_parse_as_json_or_string() {
        assert_eq!(parse_override("a.b=3").unwrap(), ("a.b".into(), json!(3)));
        assert_eq!(parse_override("m=x.json").unwrap(), ("m".into(), json!("x.json")));
        assert!(parse_override("novalue").is_err());
    }

    #[test]
    fn defaults_fill_blocks() {
        let cfg: RunConfig = serde_json::from_value(json!({"simulation": {"dt": 0.02}})).unwrap();
        let s = cfg.simulation.unwrap();
        assert_eq!(s.dt, 0.02);
        assert_eq!(s.n_traj, 20);
        assert!(serde_json::from_value::<RunConfig>(json!({"simulaton": {}})).is_err());
    }
}
