//! Experiment runner behind the `cbe` binary.

// `!(x > 0.0)` deliberately rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod commands;
pub mod config;
pub mod manifest;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Parser, Subcommand};

pub use config::Config;
pub use manifest::RunManifest;

/// Exit status for configuration and usage errors.
pub const EXIT_CONFIG: i32 = 1;
/// Exit status for numeric failures and failed statistical checks.
pub const EXIT_NUMERIC: i32 = 2;

/// Default worker count when `--workers` is absent.
pub const WORKERS_ENV: &str = "CBE_WORKERS";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => EXIT_CONFIG,
            CliError::Numeric(_) => EXIT_NUMERIC,
        }
    }
}

impl From<cbe_core::Error> for CliError {
    fn from(e: cbe_core::Error) -> Self {
        use cbe_core::Error as E;
        match e {
            E::Collision(..) | E::StepUnderflow { .. } => CliError::Numeric(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cbe", version, about = "Circular β-ensemble experiments")]
pub struct Cli {
    /// TOML configuration file.
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    /// Dotted-path override, e.g. `--set moments.n=200` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Master seed; replaces `seed` from the configuration.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true, default_value = "cbe-out")]
    pub out_dir: PathBuf,
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true, env = WORKERS_ENV)]
    pub workers: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Draw an ensemble batch.
    Sample,
    /// Dyson Brownian motion: trajectory, stationarity and exchangeability.
    Dbm,
    /// Closed-form generator against explicit differentiation.
    VerifyGenerator,
    /// Second and fourth moments of power sums against their bounds.
    Moments,
    /// Small-time conditional increments and their scaling.
    Increments,
    /// Monte Carlo Wasserstein bound and its scaling in d and n.
    SteinBound,
    /// Empirical Wasserstein-1 distance to the Gaussian limit.
    W1,
    /// Sobolev tightness and limiting-field covariance.
    Field,
}

impl Command {
    pub fn name(self) -> &'static str {
        match self {
            Command::Sample => "sample",
            Command::Dbm => "dbm",
            Command::VerifyGenerator => "verify-generator",
            Command::Moments => "moments",
            Command::Increments => "increments",
            Command::SteinBound => "stein-bound",
            Command::W1 => "w1",
            Command::Field => "field",
        }
    }
}

/// A named pass/fail check recorded in reports and the manifest.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: &str, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }
}

/// Files written by a command (relative to the output directory) and its checks.
#[derive(Debug, Default)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub checks: Vec<Check>,
}

fn build_pool(workers: Option<usize>) -> Result<(rayon::ThreadPool, usize), CliError> {
    let workers = match workers {
        Some(0) => return Err(CliError::Config("--workers must be at least 1".into())),
        Some(w) => w,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| CliError::Config(format!("cannot start worker pool: {e}")))?;
    Ok((pool, workers))
}

/// Runs a parsed invocation; returns the manifest and the exit status.
pub fn run(cli: &Cli) -> Result<(RunManifest, i32), CliError> {
    let mut cfg = config::load(cli.config.as_deref(), &cli.overrides)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    let (pool, workers) = build_pool(cli.workers)?;
    std::fs::create_dir_all(&cli.out_dir)
        .map_err(|e| CliError::Config(format!("cannot create {}: {e}", cli.out_dir.display())))?;
    let started = Instant::now();
    let outcome = pool.install(|| commands::dispatch(cli.command, &cfg, &cli.out_dir))?;
    let elapsed = started.elapsed().as_secs_f64();
    let code = if outcome.checks.iter().all(|c| c.passed) { 0 } else { EXIT_NUMERIC };
    let manifest = RunManifest::build(cli.command.name(), &cfg, workers, elapsed, &cli.out_dir, &outcome, code)?;
    manifest.write(&cli.out_dir)?;
    Ok((manifest, code))
}
