//! Front end of the `ssmr` binary: configuration, pipelines and provenance.

pub mod config;
pub mod pipeline;

use config::{load_config, parse_override};
use pipeline::{Context, StageError, StageResult};
use ssmr_core::error::Error;
use std::path::{Path, PathBuf};
use std::time::Instant;

/// Subcommand names accepted by [`run`].
pub const COMMANDS: [&str; 9] = [
    "simulate",
    "fixed-points",
    "fit-ssm",
    "fit-reduced",
    "portrait",
    "ftle",
    "anchor",
    "continuation",
    "export-surface",
];

fn validation(stage: &str, msg: String) -> StageError {
    StageError {
        stage: stage.into(),
        error: Error::Validation(msg),
    }
}

/// Value of `SSMR_THREADS`, if set. There is no internal parallelism, so
/// the cap is validated and recorded only.
pub fn thread_cap() -> StageResult<Option<usize>> {
    match std::env::var("SSMR_THREADS") {
        Err(_) => Ok(None),
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .map(Some)
            .ok_or_else(|| validation("environment", format!("SSMR_THREADS must be a positive integer, got `{v}`"))),
    }
}

/// Runs one command from a config file with `key=value` overrides.
pub fn run(
    command: &str,
    config: &Path,
    overrides: &[String],
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> StageResult<PathBuf> {
    let start = Instant::now();
    let threads = thread_cap()?;
    let mut parsed = overrides
        .iter()
        .map(|o| parse_override(o))
        .collect::<ssmr_core::error::Result<Vec<_>>>()
        .map_err(|error| StageError {
            stage: "config".into(),
            error,
        })?;
    if let Some(s) = seed {
        parsed.push(("seed".into(), serde_json::json!(s)));
    }
    if let Some(o) = out {
        parsed.push(("output_dir".into(), serde_json::json!(o)));
    }
    let mut cfg = load_config(config, &parsed).map_err(|error| StageError {
        stage: "config".into(),
        error,
    })?;
    cfg.absolutize();
    let mut ctx = Context::new(cfg)?;
    match command {
        "simulate" => pipeline::cmd_simulate(&mut ctx)?,
        "fixed-points" => pipeline::cmd_fixed_points(&mut ctx)?,
        "fit-ssm" => pipeline::cmd_fit_ssm(&mut ctx)?,
        "fit-reduced" => pipeline::cmd_fit_reduced(&mut ctx)?,
        "portrait" => pipeline::cmd_portrait(&mut ctx)?,
        "ftle" => pipeline::cmd_ftle(&mut ctx)?,
        "anchor" => pipeline::cmd_anchor(&mut ctx)?,
        "continuation" => pipeline::cmd_continuation(&mut ctx)?,
        "export-surface" => pipeline::cmd_export_surface(&mut ctx)?,
        other => return Err(validation("command", format!("unknown command `{other}`"))),
    }
    pipeline::write_provenance(&mut ctx, command, start.elapsed().as_secs_f64(), threads)?;
    Ok(ctx.out)
}
