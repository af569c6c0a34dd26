//! Batch front end: one subcommand per experiment family, reading a flat
//! key = value config and writing CSV/JSON artifacts into --out.
//!
//! Exit codes: 0 success, 2 invalid config or input, 3 solver did not
//! converge, 4 cross-check mismatch between closed form and oracle.

mod config;
mod runs;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::config::Config;

#[derive(Parser)]
#[command(
    name = "gaugelab",
    about = "Gauge-field decay experiments on the punctured disk"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Path to a flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory for CSV/JSON artifacts.
    #[arg(long, default_value = ".")]
    out: PathBuf,
    /// Print the artifact schema for this subcommand and exit.
    #[arg(long)]
    schema: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Closed-form circle Poincare constant against the spectral oracle.
    Poincare(RunArgs),
    /// Reduced vortex trajectory with fitted decay rates.
    Vortex(RunArgs),
    /// Twisted-map relaxation on a strip with decay diagnostics.
    Flow(RunArgs),
    /// Holonomy invariants along shrinking radii.
    Holonomy(RunArgs),
    /// Log-linear rate fit of a positive CSV column.
    Fit(RunArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (name, args): (&str, &RunArgs) = match &cli.command {
        Command::Poincare(a) => ("poincare", a),
        Command::Vortex(a) => ("vortex", a),
        Command::Flow(a) => ("flow", a),
        Command::Holonomy(a) => ("holonomy", a),
        Command::Fit(a) => ("fit", a),
    };
    if args.schema {
        print!("{}", runs::schema(name));
        return ExitCode::SUCCESS;
    }
    let config = match &args.config {
        Some(p) => match Config::from_path(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("config error: {e:#}");
                return ExitCode::from(2);
            }
        },
        None => {
            eprintln!("--config is required (or use --schema)");
            return ExitCode::from(2);
        }
    };
    if let Err(e) = std::fs::create_dir_all(&args.out) {
        eprintln!("cannot create output dir: {e}");
        return ExitCode::from(2);
    }
    let run = match name {
        "poincare" => runs::cmd_poincare(&config, &args.out),
        "vortex" => runs::cmd_vortex(&config, &args.out),
        "flow" => runs::cmd_flow(&config, &args.out),
        "holonomy" => runs::cmd_holonomy(&config, &args.out),
        "fit" => runs::cmd_fit(&config, &args.out),
        _ => unreachable!(),
    };
    match run {
        Ok(code) => code,
        Err(e) => {
            eprintln!("{name} failed: {e:#}");
            if let Some(ge) = e.downcast_ref::<gaugelab::GaugeError>() {
                if matches!(ge, gaugelab::GaugeError::NonConvergence { .. }) {
                    return ExitCode::from(3);
                }
            }
            ExitCode::from(2)
        }
    }
}
