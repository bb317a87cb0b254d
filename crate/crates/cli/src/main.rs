//! `sofanet`: cohort generation and ingestion, SOFA scoring, local and
//! two-party training, evaluation and the experiment suite.
//!
//! Exit codes: 0 success, 2 invalid input or configuration, 3 runtime
//! failure, 4 privacy-audit failure. Log verbosity follows `RUST_LOG`
//! (default `info`).

mod checkpoint;
mod collab;
mod commands;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use thiserror::Error;

use checkpoint::ModelKind;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Validation(String),
    #[error("{0}")]
    Runtime(String),
    #[error("privacy audit failed: {0}")]
    Audit(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }

    pub fn validation(e: impl std::fmt::Display) -> Self {
        CliError::Validation(e.to_string())
    }

    pub fn runtime(e: impl std::fmt::Display) -> Self {
        CliError::Runtime(e.to_string())
    }

    fn exit_code(&self) -> u8 {
        match self {
            CliError::Validation(_) => 2,
            CliError::Runtime(_) => 3,
            CliError::Audit(_) => 4,
        }
    }
}

pub fn write_json(path: &Path, value: &impl Serialize) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::runtime)?;
    text.push('\n');
    write_text(path, &text)
}

pub fn write_text(path: &Path, text: &str) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}

#[derive(Debug, Parser)]
#[command(
    name = "sofanet",
    version,
    about = "Two-party collaborative early sepsis recognition"
)]
pub struct Cli {
    /// Run configuration (TOML). Defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Overrides the training seed (and the generator seed for gen-synth).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output file or directory, depending on the subcommand.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ProfileArg {
    MimicLike,
    ChallengeLike,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum RoleArg {
    A,
    B,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a synthetic cohort as one PSV file per patient.
    GenSynth {
        #[arg(long, value_enum)]
        profile: ProfileArg,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        prevalence: Option<f64>,
        #[arg(long)]
        missing_rate: Option<f64>,
    },
    /// Parse and screen a PSV cohort directory and write its manifest.
    Ingest {
        #[arg(long)]
        cohort: PathBuf,
    },
    /// Per-hour SOFA scores of one PSV file as CSV.
    SofaScore {
        #[arg(long)]
        input: PathBuf,
    },
    /// Train one model on a single cohort.
    TrainLocal {
        #[arg(long, value_enum, default_value = "sofanet")]
        model: ModelKind,
        #[arg(long)]
        cohort: PathBuf,
    },
    /// Train on a source cohort, then continue on a target cohort.
    Finetune {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
    },
    /// Two-party training. With --role, run one party over TCP
    /// (--listen or --peer); without it, run both parties from this process
    /// over the transport named in the config.
    TrainCollab {
        #[arg(long, value_enum)]
        role: Option<RoleArg>,
        #[arg(long, conflicts_with = "peer")]
        listen: Option<String>,
        #[arg(long)]
        peer: Option<String>,
        /// This party's cohort (party A's when both run here).
        #[arg(long)]
        cohort: PathBuf,
        /// Party B's cohort when both parties run here.
        #[arg(long)]
        peer_cohort: Option<PathBuf>,
        /// Write the frame transcript here.
        #[arg(long)]
        tap: Option<PathBuf>,
        /// Extra cohorts whose raw windows the audit searches for.
        #[arg(long)]
        audit_cohort: Vec<PathBuf>,
    },
    /// Score a checkpoint on a cohort.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        cohort: PathBuf,
        /// Append a result row to this CSV.
        #[arg(long)]
        csv: Option<PathBuf>,
        #[arg(long)]
        run_id: Option<String>,
    },
    /// Fractions × seeds × arms on a source and target cohort.
    ExperimentSuite {
        /// Source (party A) cohort directory; synthetic when omitted.
        #[arg(long, requires = "target")]
        source: Option<PathBuf>,
        /// Target (party B) cohort directory; synthetic when omitted.
        #[arg(long, requires = "source")]
        target: Option<PathBuf>,
        /// Comma-separated arm subset.
        #[arg(long, value_delimiter = ',')]
        arms: Option<Vec<String>>,
        /// Comma-separated seed list replacing the config's.
        #[arg(long, value_delimiter = ',')]
        seeds: Option<Vec<u64>>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match commands::run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
