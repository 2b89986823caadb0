// SPDX-License-Identifier: MIT OR Apache-2.0

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

/// Compound change-point detection across parallel data streams.
#[derive(Debug, Parser)]
#[command(name = "lfnr", version, args_override_self = true)]
pub struct Cli {
    /// key=value config file; `[detect]`, `[simulate]`, ... sections apply to
    /// one subcommand. Command-line flags take precedence.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,

    /// Worker threads (0 = one per core).
    #[arg(long, global = true, env = "LFNR_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a detector over observed data.
    Detect(DetectArgs),
    /// Monte Carlo study of a procedure.
    Simulate(SimulateArgs),
    /// Estimate the limiting threshold table.
    Calibrate(CalibrateArgs),
    /// Run oracle suites.
    Verify(VerifyArgs),
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Detect(_) => "detect",
            Command::Simulate(_) => "simulate",
            Command::Calibrate(_) => "calibrate",
            Command::Verify(_) => "verify",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModelKind {
    /// Independent geometric change points, common densities.
    Ms,
    /// Shared geometric change point adopted with probability eta.
    Partial,
    /// Per-stream finite prior tables given by --prior.
    Tabular,
    /// The four-stream heterogeneous Bernoulli instance.
    Example3,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ObsKind {
    Gaussian,
    Bernoulli,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Procedure {
    Adaptive,
    Threshold,
    Dependent,
}

#[derive(Debug, Clone, Args)]
pub struct ModelArgs {
    #[arg(long, value_enum, default_value = "ms")]
    pub model: ModelKind,
    /// Geometric change-point parameter.
    #[arg(long, default_value_t = 0.05)]
    pub theta: f64,
    /// Probability that a stream adopts the shared change point.
    #[arg(long, default_value_t = 1.0)]
    pub eta: f64,
    #[arg(long, value_enum, default_value = "gaussian")]
    pub obs: ObsKind,
    /// Post-change mean (pre-change mean is 0).
    #[arg(long, default_value_t = 1.0)]
    pub mu: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma: f64,
    #[arg(long, default_value_t = 0.5)]
    pub p0: f64,
    #[arg(long, default_value_t = 0.51)]
    pub p1: f64,
    /// Prior table rows for `--model tabular`: masses P(tau = 0), P(tau = 1),
    /// ... separated by commas, rows separated by semicolons.
    #[arg(long)]
    pub prior: Option<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum InputFormat {
    Auto,
    Ndjson,
    /// Long CSV with header `t,stream,x`.
    Csv,
    /// One row per time: `t,<stream 0>,<stream 1>,...`.
    Wide,
}

#[derive(Debug, Args)]
pub struct DetectArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    #[arg(long, value_enum, default_value = "adaptive")]
    pub mode: Procedure,
    /// Threshold table for `--mode threshold`.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Number of streams; inferred from the first time step when omitted.
    #[arg(long)]
    pub k: Option<usize>,
    /// Observations; `-` reads standard input.
    #[arg(long, default_value = "-")]
    pub input: PathBuf,
    #[arg(long, value_enum, default_value = "auto")]
    pub format: InputFormat,
    /// Per-step report (NDJSON); standard output when omitted.
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Final stopping-time table (CSV).
    #[arg(long)]
    pub stops: Option<PathBuf>,
    /// Resume from this file if it exists and write the final state back.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 500)]
    pub k: usize,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Defaults to 200 for theta >= 0.05 and 600 otherwise.
    #[arg(long)]
    pub horizon: Option<u64>,
    #[arg(long, default_value_t = 500)]
    pub reps: usize,
    #[arg(long, value_enum, default_value = "adaptive")]
    pub procedure: Procedure,
    /// Threshold table for `--procedure threshold`; calibrated on the fly
    /// when omitted.
    #[arg(long)]
    pub table: Option<PathBuf>,
    /// Streams used for on-the-fly calibration.
    #[arg(long, default_value_t = 200_000)]
    pub calibration_n: usize,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Metrics CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
    /// Number of simulated streams (at least 1000).
    #[arg(long, default_value_t = 1_000_000)]
    pub n: usize,
    /// Defaults to 200 for theta >= 0.05 and 600 otherwise.
    #[arg(long)]
    pub horizon: Option<u64>,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Threshold CSV; standard output when omitted.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    /// posterior, subset, example3, optimality, order or all.
    #[arg(default_value = "all")]
    pub suite: String,
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
}

pub fn default_horizon(theta: f64) -> u64 {
    if theta >= 0.05 {
        200
    } else {
        600
    }
}
