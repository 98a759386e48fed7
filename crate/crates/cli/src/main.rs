//! `xlmimo`: dataset generation, training, evaluation, complexity reports and
//! self-verification for the hybrid-field channel estimation laboratory.
//!
//! Exit codes: 0 on success, 1 for usage or configuration errors, 2 for
//! runtime and numerical failures.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use xlmimo::harness::{HarnessError, Profile};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Harness(#[from] HarnessError),
    #[error(transparent)]
    Channel(#[from] xlmimo::channel::ChannelError),
    #[error(transparent)]
    Nn(#[from] xlmimo::nn::NnError),
    #[error("{0} verification check(s) failed")]
    Verification(usize),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_)
            | CliError::Harness(
                HarnessError::Config(_) | HarnessError::Mismatch { .. } | HarnessError::MissingCheckpoint(_),
            ) => 1,
            _ => 2,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "xlmimo", version, about = "Hybrid near/far-field XL-MIMO channel estimation laboratory")]
pub struct Cli {
    #[command(flatten)]
    pub common: Common,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct Common {
    /// JSON config merged over the profile defaults; must set "version" and "M".
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Run every parallel section on a single worker.
    #[arg(long, global = true)]
    pub deterministic: bool,
    /// Default scale: desk (M = 64) or paper (M = 256).
    #[arg(long, global = true, value_parser = parse_profile)]
    pub profile: Option<Profile>,
}

fn parse_profile(s: &str) -> Result<Profile, String> {
    Profile::parse(s).ok_or_else(|| format!("unknown profile \"{s}\" (expected desk or paper)"))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Split {
    Train,
    Val,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a training or validation dataset.
    Generate {
        #[arg(long, value_enum, default_value = "train")]
        split: Split,
    },
    /// Train a network and write its best-validation checkpoint.
    Train {
        /// Training dataset; generated from the config when omitted.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Validation dataset; generated from the config when omitted.
        #[arg(long)]
        val: Option<PathBuf>,
        /// matcenet or xlcnet, overriding the config.
        #[arg(long)]
        model: Option<String>,
        /// Checkpoint to continue from.
        #[arg(long)]
        resume: Option<PathBuf>,
        /// Training log CSV (default: <out>.log.csv).
        #[arg(long)]
        log: Option<PathBuf>,
    },
    /// Run the NMSE experiments and write the results CSV.
    Eval {
        /// Trained network to include; repeatable.
        #[arg(long = "checkpoint")]
        checkpoints: Vec<PathBuf>,
        /// Comma-separated subset of ls, lmmse, omp, hyomp, xlcnet, matcenet.
        #[arg(long, value_delimiter = ',')]
        estimators: Option<Vec<String>>,
        /// Comma-separated subset of near_only, far_only, hybrid_l0_sweep, hybrid.
        #[arg(long, value_delimiter = ',')]
        scenarios: Option<Vec<String>>,
    },
    /// Per-layer parameter and FLOP counts.
    Flops {
        /// matcenet or xlcnet; both when omitted.
        #[arg(long)]
        model: Option<String>,
    },
    /// Run the built-in analytic and gradient checks.
    Verify,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    let run = || commands::run(&cli);
    let result = if cli.common.deterministic {
        xlmimo::par::run_sequential(run)
    } else {
        run()
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
