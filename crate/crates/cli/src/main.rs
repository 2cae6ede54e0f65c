use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "ssmr", version, about = "Spectral submanifold model reduction")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(clap::Args)]
struct Common {
    /// Run configuration (JSON), or a `run.json` record to re-run.
    #[arg(short, long)]
    config: PathBuf,
    /// Dotted-path override, e.g. `simulation.dt=0.005`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate an ensemble of trajectories.
    Simulate(Common),
    /// Multistart Newton search for fixed points.
    FixedPoints(Common),
    /// Fit an SSM chart at the anchor fixed point.
    FitSsm(Common),
    /// Fit a chart and the reduced model on it.
    FitReduced(Common),
    /// Chart, reduced model and phase-portrait report.
    Portrait(Common),
    /// FTLE field and ridges on a plane.
    Ftle(Common),
    /// Anchor trajectory expansion under recorded bounded noise.
    Anchor(Common),
    /// Fixed-point continuation in an input direction.
    Continuation(Common),
    /// Plot data for a chart surface and reduced vector field.
    ExportSurface(Common),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args) = match cli.command {
        Command::Simulate(a) => ("simulate", a),
        Command::FixedPoints(a) => ("fixed-points", a),
        Command::FitSsm(a) => ("fit-ssm", a),
        Command::FitReduced(a) => ("fit-reduced", a),
        Command::Portrait(a) => ("portrait", a),
        Command::Ftle(a) => ("ftle", a),
        Command::Anchor(a) => ("anchor", a),
        Command::Continuation(a) => ("continuation", a),
        Command::ExportSurface(a) => ("export-surface", a),
    };
    match ssmr_cli::run(name, &args.config, &args.overrides, args.seed, args.out) {
        Ok(dir) => {
            println!("{name}: artifacts in {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("ssmr {name}: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
