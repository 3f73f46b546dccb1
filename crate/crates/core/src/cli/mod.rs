//! Command-line front end: `rsddej <command> --config <file>`.

pub mod config;
pub mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

pub use config::{load_config, parse_config, ConfigError, LoadedConfig, RunConfig};
pub use runner::{run_experiment, run_from_file, Command, RunError, RunManifest, RunOptions, RunOutcome};

#[derive(Debug, Parser)]
#[command(
    name = "rsddej",
    version,
    about = "Simulate reflected delay equations with jumps on the orthant"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Clone, clap::Args)]
pub struct CommonArgs {
    /// JSON configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Override the seed from the configuration.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Worker threads; defaults to the available cores.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Output directory.
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Simulate paths and write them on the output grid.
    Simulate(CommonArgs),
    /// Dissipativity constants of the model.
    Validate(CommonArgs),
    /// Second moments against the analytic bound.
    Moments(CommonArgs),
    /// Mean-square contraction of coupled solutions.
    Contraction(CommonArgs),
    /// KS comparison of segment laws from two starts.
    Invariant(CommonArgs),
    /// Occupation-time local time against the continuous regulator.
    Localtime(CommonArgs),
    /// Loss rate against minus twice the stationary drift.
    Lossrate(CommonArgs),
}

impl CliCommand {
    pub fn split(&self) -> (Command, &CommonArgs) {
        match self {
            CliCommand::Simulate(a) => (Command::Simulate, a),
            CliCommand::Validate(a) => (Command::Validate, a),
            CliCommand::Moments(a) => (Command::Moments, a),
            CliCommand::Contraction(a) => (Command::Contraction, a),
            CliCommand::Invariant(a) => (Command::Invariant, a),
            CliCommand::Localtime(a) => (Command::Localtime, a),
            CliCommand::Lossrate(a) => (Command::Lossrate, a),
        }
    }
}

/// Run a parsed command line and return its exit code.
pub fn execute(cli: &Cli) -> u8 {
    let (command, args) = cli.command.split();
    let options = RunOptions {
        seed: args.seed,
        out_dir: Some(args.out.clone()),
    };
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(k) = args.threads {
        if k == 0 {
            eprintln!("error: --threads must be at least 1");
            return 1;
        }
        builder = builder.num_threads(k);
    }
    match builder.build() {
        Ok(pool) => pool.install(|| run_from_file(command, &args.config, &options)),
        Err(e) => {
            eprintln!("error: cannot start worker pool: {e}");
            1
        }
    }
}

pub fn main() -> ExitCode {
    ExitCode::from(execute(&Cli::parse()))
}
