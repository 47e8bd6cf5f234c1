//! `moscl`: generate the synthetic benchmark, fit the difficulty and
//! temperature artifacts, train classifiers, score datasets, and run the
//! mechanism ablation — all from one binary, all byte-reproducible for a
//! given configuration and seed.
//!
//! Exit codes: 0 on success, 2 for configuration, validation, parse, and I/O
//! problems, 3 for numerical failures during a run.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod commands;
mod config;

/// Errors surfaced to the user, with their process exit code.
#[derive(Debug)]
pub enum CliError {
    Core(moscl_core::Error),
    Usage(String),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Usage(msg) => write!(f, "{msg}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<moscl_core::Error> for CliError {
    fn from(e: moscl_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if e.is_numerical() => 3,
            _ => 2,
        }
    }
}

#[derive(Parser)]
#[command(
    name = "moscl",
    version,
    about = "Naturalness-guided curriculum training for spoofed-speech detection"
)]
struct Cli {
    /// TOML configuration file; command-line flags override its values.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate the synthetic train/val/test splits.
    GenData(commands::gen_data::GenDataArgs),
    /// Fit normalization, difficulties, the threshold, the temperature
    /// policy, and the curriculum plan on the training split.
    Prepare(commands::prepare::PrepareArgs),
    /// Train one classifier using the prepared artifacts.
    Train(commands::train::TrainArgs),
    /// Score a dataset with a saved model; report metrics when labels exist.
    Eval(commands::eval::EvalArgs),
    /// Train every mechanism combination across seeds and compare test EERs.
    Ablation(commands::ablation::AblationArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn"))
        .target(env_logger::Target::Stderr)
        .init();

    let result = match &cli.command {
        Command::GenData(args) => commands::gen_data::run(args, cli.config.as_deref()),
        Command::Prepare(args) => commands::prepare::run(args, cli.config.as_deref()),
        Command::Train(args) => commands::train::run(args, cli.config.as_deref()),
        Command::Eval(args) => commands::eval::run(args, cli.config.as_deref()),
        Command::Ablation(args) => commands::ablation::run(args, cli.config.as_deref()),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
