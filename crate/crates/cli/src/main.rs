//! `fakenews`: ingest, extract, train, evaluate, ablate and report.
//!
//! Exit codes: 0 success, 1 error, 2 usage error, 3 extraction finished with
//! per-article failures.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crate::commands::Status;
use crate::config::{Overrides, RunConfig};

#[derive(Parser)]
#[command(name = "fakenews", version, about = "Multimodal fake-news detection experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    /// `key = value` config file; flags override its values.
    #[arg(long, short)]
    config: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Subcommand)]
enum Command {
    /// Validate a manifest and print dataset statistics.
    Ingest(Common),
    /// Write embedding caches and the emotion feature dump.
    Extract(Common),
    /// Train the full model and write a checkpoint and history.
    Train(Common),
    /// Score a checkpoint on the held-out split.
    Evaluate {
        #[command(flatten)]
        common: Common,
        /// Checkpoint to evaluate (default: <out_dir>/model.ckpt).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Retrain and score each ablation variant.
    Ablate(Common),
    /// Print the tables from an output directory.
    Report(Common),
}

fn run(cli: Cli) -> anyhow::Result<Status> {
    let load = |c: &Common| RunConfig::load(c.config.as_deref(), &c.overrides);
    match &cli.command {
        Command::Ingest(c) => commands::ingest(&load(c)?),
        Command::Extract(c) => commands::extract(&load(c)?),
        Command::Train(c) => commands::train_cmd(&load(c)?),
        Command::Evaluate { common, checkpoint } => commands::evaluate_cmd(&load(common)?, checkpoint.as_deref()),
        Command::Ablate(c) => commands::ablate(&load(c)?),
        Command::Report(c) => commands::report(&load(c)?),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::Partial) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
