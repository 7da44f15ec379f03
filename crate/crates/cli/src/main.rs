//! `twostep`: certify step sizes, run the solvers and the sparse-MRI
//! benchmark, and write every artifact to a run directory.
//!
//! Exit codes: 0 success, 1 certification rejected, 2 usage error, 3 I/O error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

/// Environment variable that sets the worker count.
const WORKERS_ENV: &str = "TWOSTEP_WORKERS";

#[derive(Debug, Parser)]
#[command(
    name = "twostep",
    version,
    about = "Two-step fixed-point proximity solvers"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Certify step sizes for a family; exit 0 iff certified.
    Check(Common),
    /// Run one solver and write its trace and summary.
    Solve(Common),
    /// Run the sparse-MRI benchmark.
    Mri(Common),
    /// Step-norm rate report and ergodic gap for one run.
    Rate(Common),
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// JSON run configuration.
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory (created if absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub max_iter: Option<usize>,
    /// Family name (`2sfppa`, `ladmm`, `jladmm`, `two_step_implicit`, ...) or
    /// a JSON object.
    #[arg(long)]
    pub family: Option<String>,
}

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error(transparent)]
    Core(#[from] twostep::Error),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Io { .. } | CliError::Core(twostep::Error::Io(_)) => 3,
            CliError::Core(_) => 2,
        }
    }
}

/// Outcome of a command that ran to completion.
pub enum Outcome {
    Success,
    Rejected,
}

fn configure_workers() -> Result<(), CliError> {
    let Ok(v) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = v.trim().parse().ok().filter(|n| *n > 0).ok_or_else(|| {
        CliError::Usage(format!(
            "{WORKERS_ENV} must be a positive integer, got {v:?}"
        ))
    })?;
    twostep::parallel::configure_workers(n);
    Ok(())
}

fn run(cli: Cli) -> Result<Outcome, CliError> {
    configure_workers()?;
    match cli.command {
        Command::Check(c) => commands::check(&c),
        Command::Solve(c) => commands::solve(&c),
        Command::Mri(c) => commands::mri(&c),
        Command::Rate(c) => commands::rate(&c),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match run(cli) {
        Ok(Outcome::Success) => ExitCode::SUCCESS,
        Ok(Outcome::Rejected) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
