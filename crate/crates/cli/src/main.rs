//! `sparselab` — train sparse MLPs and analyse the structures they find.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 usage or configuration error.

mod commands;
mod config;

use std::fmt;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "sparselab", version, about = "Sparse network structure experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model; writes its structure file and history CSV.
    Train(commands::TrainArgs),
    /// Retrain a saved structure from fresh weights for several seeds.
    Reinit(commands::ReinitArgs),
    /// Accuracy as surviving weights are removed after training.
    Sensitivity(commands::SensitivityArgs),
    /// Per-epoch in-degree of every node, plus degree correlations.
    Degrees(commands::DegreesArgs),
    /// Hybrid DNW accuracy across mask-freezing epochs.
    HybridSweep(commands::HybridArgs),
}

#[derive(Debug)]
pub struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    pub fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: 2,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        CliError {
            code: 1,
            message: message.into(),
        }
    }

    /// A library error raised while checking inputs, before any work ran.
    pub fn usage_from(e: sparselab::Error) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<sparselab::Error> for CliError {
    fn from(e: sparselab::Error) -> Self {
        match e {
            sparselab::Error::InvalidConfig(_) => CliError::usage(e.to_string()),
            _ => CliError::runtime(e.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

fn main() -> ExitCode {
    // clap exits with 2 on usage errors and 0 for --help / --version.
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Train(a) => commands::cmd_train(a),
        Command::Reinit(a) => commands::cmd_reinit(a),
        Command::Sensitivity(a) => commands::cmd_sensitivity(a),
        Command::Degrees(a) => commands::cmd_degrees(a),
        Command::HybridSweep(a) => commands::cmd_hybrid_sweep(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("sparselab: {e}");
            if e.code == 2 {
                eprintln!("run `sparselab --help` for usage");
            }
            ExitCode::from(e.code)
        }
    }
}
