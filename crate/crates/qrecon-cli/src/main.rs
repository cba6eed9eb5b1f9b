//! Command-line driver: forward solves, single reconstructions,
//! refinement studies, stability scans, and the identity self-check.
//!
//! Exit codes: 0 on success, 1 on solver non-convergence, 2 on
//! configuration errors.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::ConfigFile;

#[derive(Debug, Parser)]
#[command(
    name = "qrecon",
    version,
    about = "Reconstruction of the zero-order coefficient in a semilinear elliptic equation from interior data"
)]
struct Cli {
    /// Flat key = value config file (TOML-compatible subset); flags win.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// Worker threads for studies and scans (default: logical processors).
    #[arg(long, global = true)]
    jobs: Option<usize>,

    /// Directory for output artifacts.
    #[arg(long, global = true, value_name = "DIR")]
    out_dir: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Solve the state equation for a benchmark case and print the errors
    /// against the exact solution.
    Forward(ForwardArgs),
    /// Run one reconstruction at a fixed resolution and write the record.
    Invert(InvertArgs),
    /// Refinement study over several resolutions and seeds; writes
    /// CSV/SVG/text artifacts.
    Study(StudyArgs),
    /// Boundary lower-bound check and conditional-stability scan.
    Stability(StabilityArgs),
    /// Randomized check of the odd-power difference factorization.
    IdentityCheck(IdentityArgs),
}

#[derive(Debug, Args)]
struct CommonProblemArgs {
    /// Benchmark case: "a" (unit interval) or "b" (unit square).
    #[arg(long)]
    case: Option<String>,

    /// Reaction exponent (odd).
    #[arg(long)]
    m: Option<u32>,
}

#[derive(Debug, Args)]
struct ForwardArgs {
    #[command(flatten)]
    problem: CommonProblemArgs,

    /// Subdivisions per side.
    #[arg(long)]
    n_sub: Option<usize>,

    /// Coefficient to solve with: "exact" or a constant value.
    #[arg(long)]
    q: Option<String>,
}

#[derive(Debug, Args)]
struct InvertArgs {
    #[command(flatten)]
    problem: CommonProblemArgs,

    #[arg(long)]
    n_sub: Option<usize>,

    /// Noise seed.
    #[arg(long)]
    seed: Option<u64>,

    /// Noise level (default: h^2).
    #[arg(long)]
    delta: Option<f64>,

    /// Regularization weight (default: coupling-c * delta^2).
    #[arg(long)]
    alpha: Option<f64>,

    /// Coupling constant in alpha = c * delta^2.
    #[arg(long)]
    coupling_c: Option<f64>,

    #[command(flatten)]
    optimizer: OptimizerArgs,
}

#[derive(Debug, Args)]
struct StudyArgs {
    #[command(flatten)]
    problem: CommonProblemArgs,

    /// Comma-separated increasing resolutions (default: the benchmark grid).
    #[arg(long)]
    n_subs: Option<String>,

    /// Number of noise seeds per row.
    #[arg(long)]
    seeds: Option<usize>,

    /// First seed value (also settable via QRECON_SEED).
    #[arg(long)]
    seed: Option<u64>,

    /// Coupling constant in alpha = c * delta^2.
    #[arg(long)]
    coupling_c: Option<f64>,

    /// Artifact formats: any of csv, svg, table, or "all".
    #[arg(long)]
    format: Option<String>,

    /// Record wall-clock times in the CSV (breaks byte reproducibility).
    #[arg(long)]
    timing: bool,

    #[command(flatten)]
    optimizer: OptimizerArgs,
}

#[derive(Debug, Args)]
struct OptimizerArgs {
    /// Box lower bound for the coefficient.
    #[arg(long)]
    q_lower: Option<f64>,

    /// Box upper bound for the coefficient.
    #[arg(long)]
    q_upper: Option<f64>,

    /// Constant initial guess.
    #[arg(long)]
    q_init: Option<f64>,

    /// Absolute projected-gradient tolerance.
    #[arg(long)]
    gtol: Option<f64>,

    /// Optimizer iteration cap.
    #[arg(long)]
    max_iter: Option<usize>,
}

#[derive(Debug, Args)]
struct StabilityArgs {
    #[command(flatten)]
    problem: CommonProblemArgs,

    /// Resolution of the lower-bound check.
    #[arg(long)]
    n_sub: Option<usize>,

    /// Override the boundary decay exponent.
    #[arg(long)]
    gamma: Option<f64>,

    /// Number of perturbation samples.
    #[arg(long)]
    samples: Option<usize>,

    #[arg(long)]
    seed: Option<u64>,

    /// Fine resolution carrying the state solves.
    #[arg(long)]
    fine_n_sub: Option<usize>,

    /// Coarse resolution carrying the coefficient samples.
    #[arg(long)]
    coarse_n_sub: Option<usize>,
}

#[derive(Debug, Args)]
struct IdentityArgs {
    /// Odd exponent to check.
    #[arg(long)]
    m: Option<u32>,

    /// Number of random pairs.
    #[arg(long)]
    trials: Option<usize>,

    #[arg(long)]
    seed: Option<u64>,
}

/// Process-level error with its exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags, bad config values, unwritable paths: exit 2.
    Config { field: String, message: String },
    /// Solver or run-time failure: exit 1.
    Run(String),
}

impl CliError {
    fn config(field: &str, message: impl Into<String>) -> Self {
        CliError::Config {
            field: field.to_string(),
            message: message.into(),
        }
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Run(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config { field, message } => write!(f, "error in '{field}': {message}"),
            CliError::Run(message) => write!(f, "error: {message}"),
        }
    }
}

impl From<config::ConfigError> for CliError {
    fn from(e: config::ConfigError) -> Self {
        CliError::Config {
            field: e.field,
            message: e.message,
        }
    }
}

impl From<qrecon::Error> for CliError {
    fn from(e: qrecon::Error) -> Self {
        CliError::Run(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let cfg = match &cli.config {
        Some(path) => match ConfigFile::load(path) {
            Ok(cfg) => cfg,
            Err(e) => {
                eprintln!("{}", CliError::from(e));
                return ExitCode::from(2);
            }
        },
        None => ConfigFile::default(),
    };
    match commands::dispatch(cli, cfg) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code())
        }
    }
}
