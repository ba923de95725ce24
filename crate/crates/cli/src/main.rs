//! `daedra-forge`: pipeline stages for VAERS outcome classification.
//!
//! Exit codes: 0 success, 1 stage failure, 2 usage error. Structured logs go
//! to stderr as JSON lines; progress goes to stdout.

mod commands;
mod config;
mod manifest;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use daedra_core::corpus::{ErrorPolicy, TextEncoding};
use daedra_core::tokenizer::DEFAULT_MAX_SEQUENCE_LENGTH;

use crate::config::Profile;

#[derive(Debug, Parser)]
#[command(
    name = "daedra-forge",
    about = "Manifest-tracked pipeline for VAERS report outcome classification"
)]
pub struct Cli {
    /// Worker threads for parallel stages (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Parse VAERS CSV exports into a filtered JSONL record store.
    Ingest {
        #[arg(long, required = true, num_args = 1..)]
        input: Vec<PathBuf>,
        #[arg(long)]
        output: PathBuf,
        /// latin1 or utf8; a UTF-8 byte-order mark always wins.
        #[arg(long, default_value = "latin1")]
        encoding: TextEncoding,
        /// skip (drop and count malformed rows) or abort.
        #[arg(long = "on-error", default_value = "skip")]
        on_error: ErrorPolicy,
        #[arg(long)]
        force: bool,
    },
    /// Record count, word count and class histogram of a JSONL store.
    Stats {
        #[arg(long)]
        input: PathBuf,
        /// Also write the statistics as JSON.
        #[arg(long)]
        output: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Stratified train/test/validation split.
    Split {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Three comma-separated fractions summing to 1.
        #[arg(long)]
        ratios: Option<String>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Train a WordPiece vocabulary on the narratives of a JSONL store.
    TrainTokenizer {
        #[arg(long)]
        input: PathBuf,
        #[arg(long = "vocab-size")]
        vocab_size: Option<usize>,
        #[arg(long = "min-freq")]
        min_freq: Option<u64>,
        #[arg(long)]
        output: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        force: bool,
    },
    /// Print the WordPiece tokens and ids of a string.
    Tokenize {
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        text: String,
        #[arg(long = "max-len", default_value_t = DEFAULT_MAX_SEQUENCE_LENGTH)]
        max_len: usize,
    },
    /// Score candidate configurations on a stratified training subsample.
    Compare {
        #[arg(long)]
        candidates: PathBuf,
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        fraction: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// F1 tolerance of the tie-set from which the fastest candidate wins.
        #[arg(long)]
        epsilon: Option<f64>,
        /// Run candidates concurrently (runtimes stop being comparable).
        #[arg(long)]
        parallel: bool,
        #[arg(long)]
        profile: Option<Profile>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Train the classifier, checkpointing at every evaluation.
    Train {
        #[arg(long)]
        train: PathBuf,
        #[arg(long)]
        test: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        profile: Option<Profile>,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long = "out-dir")]
        out_dir: PathBuf,
        #[arg(long)]
        force: bool,
    },
    /// Class-wise, per-event and set-combination metrics for a checkpoint.
    Evaluate {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Also write class-wise and set-combination CSV tables.
        #[arg(long)]
        csv: bool,
        #[arg(long)]
        force: bool,
    },
    /// Classify one narrative.
    Predict {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        text: String,
    },
    /// Re-emit a JSONL store with token ids for external trainers.
    Export {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        output: PathBuf,
        #[arg(long = "max-len", default_value_t = DEFAULT_MAX_SEQUENCE_LENGTH)]
        max_len: usize,
        #[arg(long)]
        force: bool,
    },
    /// Re-hash the inputs and outputs recorded in a run manifest.
    Verify { manifest: PathBuf },
}

fn version() -> String {
    format!(
        "{} (data schema {})",
        env!("CARGO_PKG_VERSION"),
        daedra_core::DATA_SCHEMA_VERSION
    )
}

fn parse_args() -> Result<Cli, clap::Error> {
    let matches = Cli::command().version(version()).try_get_matches()?;
    Cli::from_arg_matches(&matches)
}

fn init_logging() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env()
        .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("info"));
    tracing_subscriber::fmt()
        .json()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .with_current_span(false)
        .init();
}

fn main() -> ExitCode {
    let cli = match parse_args() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    init_logging();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: --threads {n}: {e}");
            return ExitCode::from(2);
        }
    }
    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            tracing::error!(error = format!("{e:#}"), "stage failed");
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
