use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use whittle_pcl::cli::{self, Command, Options};
use whittle_pcl::sim::PolicyKind;

/// Whittle indices for partially observed restless bandits.
#[derive(Parser)]
#[command(name = "whittle", version)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,

    /// Experiment configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Overrides the configured master seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Directory for output files.
    #[arg(long, global = true, default_value = ".")]
    out: PathBuf,

    /// Comma-separated policies: whittle, myopic, random.
    #[arg(long, global = true, value_delimiter = ',')]
    policies: Option<Vec<PolicyKind>>,

    #[arg(long, global = true)]
    episodes: Option<usize>,

    #[arg(long, global = true)]
    horizon: Option<usize>,

    /// Track exact beliefs and interpolate indices between stored states.
    #[arg(long, global = true)]
    interpolate: bool,
}

#[derive(Subcommand)]
enum Cmd {
    /// Enumerate the approximate belief space of every arm.
    Enumerate,
    /// Compute index tables.
    Index,
    /// Simulate a single policy.
    Simulate,
    /// Compare policies against the myopic baseline.
    Compare,
    /// Check the index tables against the independent oracles.
    OracleVerify,
    /// Generate a random instance with monotone indices.
    Generate {
        /// Physical states per arm.
        #[arg(long, default_value_t = 3)]
        states: usize,
        /// Number of arms.
        #[arg(long, default_value_t = 30)]
        arms: usize,
        /// Extra draws allowed per arm.
        #[arg(long, default_value_t = 100)]
        retries: usize,
    },
}

fn main() -> ExitCode {
    let args = Cli::parse();
    let mut options = Options {
        config: args.config,
        seed: args.seed,
        out: args.out,
        policies: args.policies,
        episodes: args.episodes,
        horizon: args.horizon,
        interpolate: args.interpolate,
        ..Options::default()
    };
    let command = match args.command {
        Cmd::Enumerate => Command::Enumerate,
        Cmd::Index => Command::Index,
        Cmd::Simulate => Command::Simulate,
        Cmd::Compare => Command::Compare,
        Cmd::OracleVerify => Command::OracleVerify,
        Cmd::Generate {
            states,
            arms,
            retries,
        } => {
            options.states = states;
            options.arms = arms;
            options.retries = retries;
            Command::Generate
        }
    };
    match cli::dispatch(command, &options) {
        Ok(outcome) => {
            print!("{}", outcome.message);
            if outcome.success {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
