//! Experiment driver: every subcommand reads a JSON config (anything that
//! affects numerics lives in the config, flags are paths/verbosity only),
//! writes its artifacts plus the resolved config into an output directory,
//! and is bit-reproducible given (config, seed).
//!
//! Exit codes: 0 success, 1 runtime failure (missing inputs, training
//! errors), 2 usage, 3 config schema violation.

mod commands;
mod config;
mod report;

use clap::error::ErrorKind;
use clap::{Parser, Subcommand};
use std::path::PathBuf;

pub use config::*;
pub use report::{parse_report_csv, parse_report_csv_bytes, report_bundle};

#[derive(Debug)]
pub enum CliError {
    /// Config failed to parse or validate against its schema.
    Schema(String),
    /// Anything that went wrong while running.
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Schema(_) => 3,
            CliError::Runtime(_) => 1,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            CliError::Schema(m) | CliError::Runtime(m) => m,
        }
    }
}

impl From<mtslm::Error> for CliError {
    fn from(e: mtslm::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Runtime(e.to_string())
    }
}

pub type CliResult = Result<(), CliError>;

#[derive(Parser)]
#[command(
    name = "mtslm",
    version,
    about = "Multi-timescale LSTM language-modeling laboratory",
    subcommand_required = true,
    arg_required_else_help = true
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand)]
pub enum Command {
    /// Tokenize raw split files into binary token arrays plus a vocabulary
    /// sidecar.
    PrepareCorpus {
        #[arg(long)]
        config: PathBuf,
    },
    /// Sample a bigram Markov control corpus from a prepared corpus.
    GenMarkov {
        #[arg(long)]
        config: PathBuf,
    },
    /// Generate Dyck-2 train/valid/test splits as JSON-lines.
    GenDyck {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train a language model (baseline or multi-timescale).
    TrainLm {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train a Dyck-2 model with Adam.
    TrainDyck {
        #[arg(long)]
        config: PathBuf,
    },
    /// Evaluate a language-model checkpoint: per-bin perplexities and the
    /// optional bootstrap comparison against a second checkpoint.
    Eval {
        #[arg(long)]
        config: PathBuf,
    },
    /// Estimate unit timescales from forget-gate traces and fit candidate
    /// distributions by KS grid search.
    FitTimescales {
        #[arg(long)]
        config: PathBuf,
    },
    /// Timescale-sorted unit-group ablation (information routing).
    Ablate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Word-ablation cell-state decay curves.
    WordAblate {
        #[arg(long)]
        config: PathBuf,
    },
    /// Whole-sequence Dyck accuracy bucketed by max pair distance.
    DyckEval {
        #[arg(long)]
        config: PathBuf,
    },
    /// Train and evaluate multi-timescale models across shape parameters.
    SweepAlpha {
        #[arg(long)]
        config: PathBuf,
    },
    /// Merge the reports of one or more run directories into a single JSON
    /// summary.
    Report {
        /// Run directories to merge.
        dirs: Vec<PathBuf>,
        /// Write the summary here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Parses argv and runs; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 2,
            };
            let _ = e.print();
            return code;
        }
    };
    match dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {}", e.message());
            e.exit_code()
        }
    }
}

fn dispatch(command: Command) -> CliResult {
    match command {
        Command::PrepareCorpus { config } => commands::prepare_corpus(&config),
        Command::GenMarkov { config } => commands::gen_markov(&config),
        Command::GenDyck { config } => commands::gen_dyck(&config),
        Command::TrainLm { config } => commands::train_lm(&config),
        Command::TrainDyck { config } => commands::train_dyck(&config),
        Command::Eval { config } => commands::eval(&config),
        Command::FitTimescales { config } => commands::fit_timescales(&config),
        Command::Ablate { config } => commands::ablate(&config),
        Command::WordAblate { config } => commands::word_ablate(&config),
        Command::DyckEval { config } => commands::dyck_eval(&config),
        Command::SweepAlpha { config } => commands::sweep_alpha(&config),
        Command::Report { dirs, out } => commands::report(&dirs, out.as_deref()),
    }
}
