//! `automiseg`: generate benchmarks, adapt, run, evaluate and ablate.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad arguments; exit code 1.
    #[error("{0}")]
    Usage(String),
    /// Anything that went wrong while doing the work; exit code 2.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn runtime(e: impl std::fmt::Display) -> Self {
        Self::Runtime(e.to_string())
    }
}

#[derive(Debug, Parser)]
#[command(name = "automiseg", version, about = "Test-time adaptation for zero-shot medical image segmentation")]
pub struct Cli {
    /// More log output (repeat for debug).
    #[arg(short, long, action = clap::ArgAction::Count, global = true)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a seeded synthetic benchmark with masks and task assets.
    GenBench {
        #[arg(long, default_value_t = 50)]
        n: usize,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
        /// JSON mock-world specification; defaults to the built-in world.
        #[arg(long)]
        mock_spec: Option<PathBuf>,
    },
    /// Search for the best configuration on an unlabelled subset.
    Adapt {
        #[command(flatten)]
        data: DataArgs,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long, value_enum, default_value_t = Mode::Batch)]
        mode: Mode,
        #[arg(long)]
        out: PathBuf,
    },
    /// Segment every sample with a fixed configuration.
    Run {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long)]
        config: PathBuf,
        #[arg(long, default_value_t = 1)]
        workers: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a results directory against ground-truth masks.
    Eval {
        #[arg(long)]
        results: PathBuf,
        #[arg(long)]
        dataset: PathBuf,
        /// Trial log for the optimisation plots; defaults to `<results>/trials.jsonl`.
        #[arg(long)]
        trials: Option<PathBuf>,
        /// Adaptation summary naming the subset to exclude; defaults to `<results>/adaptation.json`.
        #[arg(long)]
        adaptation: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run with grounding and segmentation blocks taken from different configurations.
    Ablate {
        #[command(flatten)]
        data: DataArgs,
        /// One of optimal-optimal, optimal-base, optimal-random, base-optimal, random-optimal.
        #[arg(long)]
        regime: String,
        /// Optimal configuration; adapted from scratch when omitted.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        search: SearchArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Serve the mock backends over the wire protocol.
    ServeMock {
        #[arg(long, default_value = "127.0.0.1:8080")]
        addr: String,
        #[arg(long, default_value_t = 4)]
        threads: usize,
        #[arg(long)]
        mock_spec: Option<PathBuf>,
    },
}

#[derive(Debug, Args)]
pub struct DataArgs {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    task: PathBuf,
    /// `mock` or the base URL of a model server.
    #[arg(long, default_value = "mock")]
    backend: String,
    /// Per-request timeout in seconds for a remote backend.
    #[arg(long, default_value_t = 120.0)]
    timeout: f64,
    /// Retries after a transport failure for a remote backend.
    #[arg(long, default_value_t = 2)]
    retries: u32,
    #[arg(long)]
    mock_spec: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SearchArgs {
    #[arg(long, default_value_t = 100)]
    trials: usize,
    #[arg(long, default_value_t = 100)]
    subset: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    #[arg(long, default_value_t = 1)]
    workers: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Batch,
    PerSample,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    env_logger::Builder::new()
        .filter_level(level)
        .parse_default_env()
        .init();

    match commands::run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Usage(_) => 1,
                CliError::Runtime(_) => 2,
            })
        }
    }
}
