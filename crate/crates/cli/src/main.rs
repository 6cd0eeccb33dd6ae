//! `she`: command-line driver for the syntax-hierarchy retrieval pipeline.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{CommandFactory, FromArgMatches, Parser, Subcommand};
use she_core::{Config, Error};

#[derive(Debug, Parser)]
#[command(name = "she", version, about = "Syntax-hierarchy-enhanced text-video retrieval")]
pub struct Cli {
    /// JSON config overriding the defaults listed below.
    #[arg(long, global = true, value_name = "PATH")]
    config: Option<PathBuf>,

    /// Print the effective configuration as JSON and exit.
    #[arg(long)]
    dump_config: bool,

    /// Worker threads for cross-pair evaluation; results do not depend on it.
    #[arg(long, global = true, default_value_t = 1, value_parser = clap::value_parser!(u16).range(1..))]
    threads: u16,

    /// Debug logging and full error chains.
    #[arg(long, short, global = true)]
    verbose: bool,

    #[command(subcommand)]
    command: Option<Command>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write a deterministic synthetic dataset and its manifest.
    GenFixtures {
        /// Output directory.
        #[arg(long, short)]
        out: PathBuf,
        #[arg(long, default_value_t = 1)]
        seed: u64,
        #[arg(long, default_value_t = 8)]
        pairs: usize,
        /// Words per caption.
        #[arg(long, default_value_t = 8)]
        words: usize,
        /// Frames per video.
        #[arg(long, default_value_t = 4)]
        frames: usize,
        /// Patches per frame.
        #[arg(long, default_value_t = 9)]
        patches: usize,
        /// Feature width.
        #[arg(long, default_value_t = 16)]
        dim: usize,
    },
    /// Build the syntax hierarchy of the first sentence in a CoNLL-U file.
    BuildHierarchy {
        input: PathBuf,
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Dump per-pair text and video hierarchy features.
    Fuse {
        #[arg(long)]
        manifest: PathBuf,
        /// Checkpoint directory.
        #[arg(long)]
        params: PathBuf,
        /// Output directory.
        #[arg(long, short)]
        out: PathBuf,
        /// Divide per-noun frame sums by lambda_patch.
        #[arg(long)]
        literal_eq17: bool,
    },
    /// Score every text against every video.
    Score {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        params: PathBuf,
        /// Output tensor; a JSON sidecar is written next to it.
        #[arg(long, short)]
        out: PathBuf,
        /// Apply dual-softmax post-processing.
        #[arg(long)]
        dsl: bool,
        #[arg(long)]
        literal_eq17: bool,
    },
    /// Train from scratch and write a checkpoint plus loss log.
    Train {
        #[arg(long)]
        manifest: PathBuf,
        /// Checkpoint directory.
        #[arg(long, short)]
        out: PathBuf,
    },
    /// Retrieval metrics in both directions.
    Eval {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        params: PathBuf,
        #[arg(long)]
        report: PathBuf,
        #[arg(long)]
        dsl: bool,
        #[arg(long)]
        literal_eq17: bool,
    },
    /// Run the built-in invariant suite.
    Selfcheck,
}

const USAGE: u8 = 1;
const DATA: u8 = 2;
const NUMERIC: u8 = 3;

fn exit_code(err: &Error) -> u8 {
    match err {
        Error::Config(_) => USAGE,
        Error::NonFinite(_) => NUMERIC,
        _ => DATA,
    }
}

fn command() -> clap::Command {
    let defaults = Config::default().to_json();
    Cli::command().after_help(format!("Config defaults (override with --config):\n{defaults}"))
}

fn main() -> ExitCode {
    let cli = match command().try_get_matches().and_then(|m| Cli::from_arg_matches(&m)) {
        Ok(cli) => cli,
        Err(err) if err.use_stderr() => {
            let text = err.render().to_string();
            eprintln!("{}", text.lines().next().unwrap_or("error: invalid arguments"));
            return ExitCode::from(USAGE);
        }
        Err(err) => {
            // --help and --version
            let _ = err.print();
            return ExitCode::SUCCESS;
        }
    };

    let level = if cli.verbose { "debug" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level))
        .format_timestamp(None)
        .init();

    match commands::run(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(err) => {
            if cli.verbose {
                eprintln!("error: {err:?}");
            } else {
                eprintln!("error: {err}");
            }
            ExitCode::from(exit_code(&err))
        }
    }
}
