//! Command-line entry points and the local gate service.
//!
//! Exit codes: 0 success, 1 error, 2 gates open, 3 infeasible after
//! repairs.

pub mod commands;
pub mod serve;

use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use clauseplan::consolidate::ConsolidationPolicy;
use clauseplan::orchestrate::{Outcome, RunConfig, RunStatus, DEFAULT_I_MAX};

pub const EXIT_OK: u8 = 0;
pub const EXIT_ERROR: u8 = 1;
pub const EXIT_GATED: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;

/// Exit code for a run outcome.
pub fn exit_code(outcome: &Outcome) -> u8 {
    match outcome.status() {
        RunStatus::Done => EXIT_OK,
        RunStatus::Gated => EXIT_GATED,
        RunStatus::Failed if outcome.diagnosis.is_some() => EXIT_INFEASIBLE,
        RunStatus::Failed | RunStatus::Running => EXIT_ERROR,
    }
}

#[derive(Debug, Parser)]
#[command(name = "clauseplan", version, about = "Contract-grounded replenishment planning")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract, check, normalize and consolidate contract terms.
    Verify(VerifyArgs),
    /// Run the full verify/repair loop and write an outcome bundle.
    Plan(PlanArgs),
    /// Regret micro-benchmark by exact enumeration.
    Bench(BenchArgs),
    /// Three-period MOQ/lead-time example.
    Toy(ToyArgs),
    /// Serve runs, gates and cards over HTTP.
    Serve(ServeArgs),
}

#[derive(Debug, Clone, Args)]
pub struct PolicyArgs {
    /// Verifier iteration limit.
    #[arg(long, default_value_t = DEFAULT_I_MAX)]
    pub i_max: usize,
    /// Gate conditional clauses instead of enforcing the stricter base value.
    #[arg(long)]
    pub no_collapse_conditionals: bool,
    /// Treat a missing MOQ as "no MOQ" instead of gating.
    #[arg(long)]
    pub allow_absent_moq: bool,
    /// Gate Class A conflicts instead of merging them conservatively.
    #[arg(long)]
    pub no_conservative_merge: bool,
}

impl PolicyArgs {
    pub fn run_config(&self) -> RunConfig {
        RunConfig {
            i_max: self.i_max,
            policy: ConsolidationPolicy {
                collapse_conditionals: !self.no_collapse_conditionals,
                allow_absent_moq: self.allow_absent_moq,
                conservative_merge: !self.no_conservative_merge,
                ..ConsolidationPolicy::default()
            },
            resolutions: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, Args)]
pub struct VerifyArgs {
    /// Corpus manifest (JSON list of documents).
    #[arg(long)]
    pub corpus: PathBuf,
    /// Master data JSON.
    #[arg(long)]
    pub master: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub policy: PolicyArgs,
}

#[derive(Debug, Clone, Args)]
pub struct PlanArgs {
    #[arg(long, required_unless_present = "config")]
    pub corpus: Option<PathBuf>,
    #[arg(long, required_unless_present = "config")]
    pub master: Option<PathBuf>,
    /// Planning instance JSON.
    #[arg(long, required_unless_present = "config")]
    pub instance: Option<PathBuf>,
    /// JSON list of recorded gate resolutions.
    #[arg(long)]
    pub resolutions: Option<PathBuf>,
    /// Re-run from a bundle's `config.json`; other input flags are ignored.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub policy: PolicyArgs,
}

#[derive(Debug, Clone, Args)]
pub struct BenchArgs {
    #[arg(long, default_value_t = 500)]
    pub n: usize,
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    #[arg(long, default_value_t = 10_000)]
    pub resamples: usize,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Args)]
pub struct ToyArgs {
    /// Holding cost per unit per period [default: 0.1].
    #[arg(long)]
    pub h: Option<f64>,
    /// True lead time in periods [default: 2].
    #[arg(long)]
    pub l_true: Option<u32>,
    /// Extracted lead time in periods [default: 1].
    #[arg(long)]
    pub l_ext: Option<u32>,
}

#[derive(Debug, Clone, Args)]
pub struct ServeArgs {
    /// Directory of run bundles, one subdirectory per run.
    #[arg(long)]
    pub runs: PathBuf,
    #[arg(long, default_value_t = 8787)]
    pub port: u16,
    #[arg(long, default_value = "127.0.0.1")]
    pub host: String,
}

/// Effective configuration of a `plan` run, written as `config.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanConfig {
    pub command: String,
    pub corpus: PathBuf,
    pub master: PathBuf,
    pub instance: PathBuf,
    pub run: RunConfig,
}

/// Effective configuration of a `verify` run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub command: String,
    pub corpus: PathBuf,
    pub master: PathBuf,
    pub run: RunConfig,
}

pub fn run(cli: Cli) -> u8 {
    let result = match cli.command {
        Command::Verify(a) => commands::verify(&a),
        Command::Plan(a) => commands::plan(&a),
        Command::Bench(a) => commands::bench(&a),
        Command::Toy(a) => commands::toy_cmd(&a),
        Command::Serve(a) => serve::serve(&a),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_ERROR
        }
    }
}
