//! `qps`: run quasi-periodic Schrödinger experiments and persist their reports.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod output;
mod settings;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qps_core::Error;

use crate::output::Recorder;
use crate::settings::{resolve, Settings};

#[derive(Debug, Parser)]
#[command(
    name = "qps",
    version,
    about = "Quasi-periodic Schrödinger cocycle experiments"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON file with experiment settings; flags override its fields.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(flatten)]
    settings: Settings,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Finite-scale Lyapunov exponent over an energy grid.
    Lyapunov,
    /// Empirical large-deviation fractions across scales.
    Ldt,
    /// IDS, Thouless residual and eigenvector localization on finite boxes.
    Spectrum,
    /// Avalanche-principle defect on hyperbolic matrix chains.
    Avalanche,
    /// Multiscale estimate of L_N from two small scales.
    Multiscale,
    /// Łojasiewicz exponent of the potential's sublevel sets.
    Loja,
    /// Sup-norm error of Fourier truncations across scales.
    Truncate,
    /// Fejér kernels and, with --lambda and --N, shift-averaged deviations.
    DeviationsKernel,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Lyapunov => "lyapunov",
            Command::Ldt => "ldt",
            Command::Spectrum => "spectrum",
            Command::Avalanche => "avalanche",
            Command::Multiscale => "multiscale",
            Command::Loja => "loja",
            Command::Truncate => "truncate",
            Command::DeviationsKernel => "deviations-kernel",
        }
    }
}

/// Exit code 2 for configuration problems, 3 for numerical failures.
#[derive(Debug)]
pub enum Failure {
    Config(String),
    Numerical(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidArgument(_)
            | Error::InvalidPotential(_)
            | Error::RationalFrequency { .. } => Failure::Config(e.to_string()),
            other => Failure::Numerical(other.to_string()),
        }
    }
}

fn run(cli: Cli) -> Result<PathBuf, Failure> {
    let file = match &cli.config {
        Some(path) => Settings::from_file(path)?,
        None => Settings::default(),
    };
    let command = cli.command.name();
    let resolved = resolve(command, cli.settings.over(file))?;
    let workers = resolved.settings.workers.expect("defaulted");
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build_global()
        .map_err(|e| Failure::Config(format!("field 'workers': {e}")))?;

    let mut rec = Recorder::new(command, &resolved.settings)?;
    match cli.command {
        Command::Lyapunov => commands::lyapunov(&resolved, &mut rec)?,
        Command::Ldt => commands::ldt(&resolved, &mut rec)?,
        Command::Spectrum => commands::spectrum(&resolved, &mut rec)?,
        Command::Avalanche => commands::avalanche(&resolved, &mut rec)?,
        Command::Multiscale => commands::multiscale(&resolved, &mut rec)?,
        Command::Loja => commands::loja(&resolved, &mut rec)?,
        Command::Truncate => commands::truncate_cmd(&resolved, &mut rec)?,
        Command::DeviationsKernel => commands::deviations_kernel(&resolved, &mut rec)?,
    }
    rec.finish(resolved.settings.emit_plot)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(manifest) => {
            println!("{}", manifest.display());
            ExitCode::SUCCESS
        }
        Err(Failure::Config(msg)) => {
            eprintln!("config error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            ExitCode::from(3)
        }
    }
}
