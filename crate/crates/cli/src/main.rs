use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use lpscope_cli::commands::{cmd_analyze, cmd_generate, cmd_movements, cmd_replay};
use lpscope_cli::config::{RunConfig, Settings};
use lpscope_cli::error::CliError;
use lpscope_cli::scenario::Scenario;

#[derive(Parser)]
#[command(name = "lpscope", version, about = "Liquidity-provider analytics for constant-product pools")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Write a synthetic event log, price feed and registry
    Generate {
        /// Scenario TOML file
        #[arg(long, conflicts_with = "preset")]
        scenario: Option<PathBuf>,
        /// Built-in scenario: minimal, stable, exotic or market
        #[arg(long)]
        preset: Option<String>,
        /// Seed used when the scenario does not set one
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Replay an event log into pool snapshots and final balances
    Replay(Settings),
    /// Returns, fees, impermanent loss, risk, correlations and classification
    Analyze(Settings),
    /// Cross-pool liquidity movements
    Movements(Settings),
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate { scenario, preset, seed, out } => {
            let sc = match (scenario, preset) {
                (Some(path), _) => {
                    let text = std::fs::read_to_string(&path).map_err(|e| CliError::io(&path, e))?;
                    Scenario::from_toml(&text)?
                }
                (None, Some(name)) => Scenario::preset(&name)?,
                (None, None) => return Err(CliError::Input("one of --scenario or --preset is required".into())),
            };
            cmd_generate(&sc, seed, &out)
        }
        Command::Replay(s) => cmd_replay(&RunConfig::resolve(s)?),
        Command::Analyze(s) => cmd_analyze(&RunConfig::resolve(s)?),
        Command::Movements(s) => cmd_movements(&RunConfig::resolve(s)?),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
