//! Command-line front end: ingest configs and CSVs, run the
//! calibrate/run/sensitivity commands, emit result CSVs and plot-ready
//! sidecars.
//!
//! Exit codes: 0 success, 1 validation, 2 runtime (non-convergence),
//! 3 I/O.

mod calibrate;
mod error;
mod manifest;
mod outputs;
mod run;
mod sensitivity;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::error::ErrorKind;
use clap::{Args, Parser, Subcommand};

use crate::error::CliError;

#[derive(Debug, Parser)]
#[command(
    name = "stockflow",
    version,
    about = "Depletion kinetics of cost-distributed resources: flows from prices, marginal costs from demand, Monte Carlo bands"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario config (forward, reverse or coupled).
    Run(RunArgs),
    /// Estimate nu0 from a reserve/production history.
    Calibrate(CalibrateArgs),
    /// Sweep nu0 values over one resource of a scenario.
    Sensitivity(SensitivityArgs),
}

#[derive(Debug, Args)]
pub(crate) struct RunArgs {
    /// Scenario config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Overrides the ensemble seed from the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads for ensemble runs (default: machine parallelism).
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Debug, Args)]
pub(crate) struct CalibrateArgs {
    /// R/P history CSV (`year,region,reserves,production`).
    #[arg(long)]
    data: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Inclusive year window, e.g. `1987:2006` (default: all years).
    #[arg(long)]
    window: Option<String>,
    /// Comma-separated region subset (default: global aggregation).
    #[arg(long)]
    regions: Option<String>,
    /// Unit factor applied to reserves at ingestion.
    #[arg(long, default_value_t = 1.0)]
    reserves_scale: f64,
    /// Unit factor applied to production at ingestion.
    #[arg(long, default_value_t = 1.0)]
    production_scale: f64,
}

#[derive(Debug, Args)]
pub(crate) struct SensitivityArgs {
    /// Scenario config (forward or reverse mode).
    #[arg(long)]
    config: PathBuf,
    /// Output directory (created if missing).
    #[arg(long)]
    out: PathBuf,
    /// Comma-separated R/P values in years, e.g. `34,44,54`.
    #[arg(long)]
    nu0_inverse: String,
    /// Resource to sweep (required when the config has several).
    #[arg(long)]
    resource: Option<String>,
    /// Worker threads (kept for symmetry; sweeps run serially).
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match cli.command {
        Command::Run(args) => run::execute(args),
        Command::Calibrate(args) => calibrate::execute(args),
        Command::Sensitivity(args) => sensitivity::execute(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

/// Installs a global rayon pool when `--threads` is given. Results are
/// identical at any thread count; this only bounds parallelism.
pub(crate) fn configure_threads(threads: Option<usize>) -> Result<(), CliError> {
    if let Some(n) = threads {
        if n == 0 {
            return Err(CliError::Validation("--threads must be >= 1".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Runtime(format!("thread pool: {e}")))?;
    }
    Ok(())
}
