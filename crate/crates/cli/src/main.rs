//! `cda-lab`: solve, simulate and verify continuous double auction models
//! described by a TOML run configuration.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;
mod table;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Job;
use crate::config::RunConfig;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("computation failed: {0}")]
    Compute(String),
    #[error("verification failed: {0}")]
    Verification(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Verification(_) => 1,
            CliError::Config(_) => 2,
            CliError::Compute(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "cda-lab", version, about = "Continuous double auction analysis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output CSV path; stdout when omitted.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    runs: Option<usize>,
    #[arg(long, global = true)]
    workers: Option<usize>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Solve for the Bayesian Nash equilibrium.
    Bne,
    /// Monte Carlo simulation of the auction.
    Simulate,
    /// Analytic distribution of the transaction price.
    PriceCdf,
    /// Expected payoff of one trader over a grid of shouts.
    Payoff,
    /// Competitive and equilibrium profits.
    Welfare,
    /// Full invariant battery; exits 1 if any check fails.
    Verify,
}

type Handler = fn(&Job) -> Result<(), CliError>;

fn run(cli: Cli) -> Result<(), CliError> {
    let path = cli.config.ok_or_else(|| CliError::Config("--config is required".into()))?;
    let mut cfg = RunConfig::load(&path)?;
    if let Some(s) = cli.seed {
        cfg.params.seed = s;
    }
    if let Some(r) = cli.runs {
        if r == 0 {
            return Err(CliError::Config("--runs must be positive".into()));
        }
        cfg.params.runs = r;
    }
    if let Some(w) = cli.workers {
        cfg.params.workers = Some(w);
    }
    let out = cli.out.or_else(|| cfg.output.path.clone().map(PathBuf::from));
    let (name, f): (&'static str, Handler) = match cli.command {
        Command::Bne => ("bne", commands::bne),
        Command::Simulate => ("simulate", commands::simulate),
        Command::PriceCdf => ("price-cdf", commands::price_cdf),
        Command::Payoff => ("payoff", commands::payoff),
        Command::Welfare => ("welfare", commands::welfare),
        Command::Verify => ("verify", commands::verify),
    };
    log::info!("{name}: config {} ({})", path.display(), cfg.hash);
    f(&Job { command: name, cfg, out })
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter("CDA_LAB_LOG")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("cda-lab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
