//! `embercall` command-line entry point.
//!
//! Thin orchestrator over the library crate: dataset builds, training,
//! inference, 2-D projection, and the call/no-call report. Exit codes:
//! 0 success, 1 validation (bad flags/config), 2 runtime failure.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;

#[derive(Debug, Parser)]
#[command(
    name = "embercall",
    version,
    about = "Turn weakly labeled audio into an annotated embedding dataset, then train, infer, and inspect"
)]
struct Cli {
    /// Optional key=value config file; command-line flags take
    /// precedence over its entries.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the dataset build pipeline over a corpus manifest.
    Build(commands::BuildArgs),
    /// Train a classifier on a consolidated dataset.
    Train(commands::TrainArgs),
    /// Score a soundscape per 5-second interval into a submission CSV.
    Infer(commands::InferArgs),
    /// Project dataset embeddings to 2-D principal components.
    Project(commands::ProjectArgs),
    /// Report call/no-call balance and held-out detection accuracy.
    NocallReport(commands::NocallReportArgs),
}

/// Validation failure (exit 1) versus runtime failure (exit 2).
#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Runtime(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Runtime(m) => write!(f, "{m}"),
        }
    }
}

impl From<embercall_core::Error> for CliError {
    fn from(e: embercall_core::Error) -> Self {
        // Config/parse problems are the user's input; everything else
        // is a runtime failure.
        match &e {
            embercall_core::Error::Config(_) => CliError::Usage(e.to_string()),
            _ => CliError::Runtime(e.to_string()),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

pub fn runtime(msg: impl Into<String>) -> CliError {
    CliError::Runtime(msg.into())
}

fn dispatch(cli: Cli) -> CliResult<()> {
    let cfg = config::ConfigMap::load(cli.config.as_deref())?;
    match cli.command {
        Command::Build(args) => commands::cmd_build(args, &cfg),
        Command::Train(args) => commands::cmd_train(args, &cfg),
        Command::Infer(args) => commands::cmd_infer(args, &cfg),
        Command::Project(args) => commands::cmd_project(args, &cfg),
        Command::NocallReport(args) => commands::cmd_nocall_report(args, &cfg),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // clap prints help/version to stdout with success status;
            // preserve that, map genuine usage errors to exit 1.
            let code = if e.exit_code() == 0 { 0 } else { 1 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => {}
        Err(CliError::Usage(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(1);
        }
        Err(CliError::Runtime(msg)) => {
            eprintln!("error: {msg}");
            std::process::exit(2);
        }
    }
}
