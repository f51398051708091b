//! Command-line front end: wires one JSON config document to the
//! numerical library and emits machine-readable results.
//!
//! Exit codes: 0 on success, 2 on validation failure (bad config, bad
//! parameters), 3 on numerical failure (solver non-convergence,
//! quadrature breakdown).

mod config;
mod runner;

use clap::{Parser, Subcommand};
use config::OutputFormat;
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Numerical(String),
}

impl CliError {
    fn from_core(e: nldiff_core::Error) -> Self {
        use nldiff_core::Error::*;
        match e {
            QuadratureNonConvergence | NonFiniteState { .. } => {
                CliError::Numerical(e.to_string())
            }
            _ => CliError::Validation(e.to_string()),
        }
    }
}

#[derive(Parser, Debug)]
#[command(
    name = "nldiff",
    about = "Principal eigenvalues, bounds, witnesses and evolution for nonlocal diffusion operators with deformation kernels",
    version
)]
struct Cli {
    #[command(subcommand)]
    task: Task,
    /// Path to the JSON config document.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output path (overrides the config's output.path). Stdout when
    /// neither is given.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Output format (overrides the config's output.format).
    #[arg(long, global = true, value_enum)]
    format: Option<OutputFormat>,
    /// Worker cap for assembly and matrix-vector products.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Master seed for Monte Carlo and random initial data.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Relative solver tolerance.
    #[arg(long, global = true)]
    tol: Option<f64>,
}

#[derive(Subcommand, Debug, Clone, Copy, PartialEq, Eq)]
enum Task {
    /// Principal eigenpair on one ball, with the bound report attached.
    Eigen,
    /// lambda1(B_R) along an increasing list of radii.
    Sweep,
    /// Analytic lower/upper bounds and the closed-form linear value.
    Bounds,
    /// Construct a near-extremal witness and measure its overlap ratio.
    Witness,
    /// Forward-Euler evolution and the L2 decay-rate fit.
    Evolve,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Validation(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Numerical(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let config_path = cli
        .config
        .as_ref()
        .ok_or_else(|| CliError::Validation("--config PATH is required".into()))?;
    let cfg = config::ConfigFile::load(config_path)?;

    let settings = runner::Settings {
        output: cli
            .output
            .clone()
            .or_else(|| cfg.output.as_ref().and_then(|o| o.path.clone())),
        format: cli
            .format
            .or_else(|| cfg.output.as_ref().and_then(|o| o.format)),
        jobs: cli.jobs.or(cfg.jobs).unwrap_or(1).max(1),
        seed: cli.seed.or(cfg.seed).unwrap_or(0),
        tol: cli.tol.or(cfg.tol).unwrap_or(1e-9),
        max_nodes: cfg.max_nodes.unwrap_or(nldiff_core::DEFAULT_MAX_NODES),
    };
    if !(settings.tol > 0.0) {
        return Err(CliError::Validation("tolerance must be positive".into()));
    }

    match cli.task {
        Task::Eigen => runner::run_eigen(&cfg, &settings),
        Task::Sweep => runner::run_sweep(&cfg, &settings),
        Task::Bounds => runner::run_bounds(&cfg, &settings),
        Task::Witness => runner::run_witness(&cfg, &settings),
        Task::Evolve => runner::run_evolve(&cfg, &settings),
    }
}
