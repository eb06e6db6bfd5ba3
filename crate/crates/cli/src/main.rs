//! Experiment driver: simulate a market, pretrain on the liquid proxy,
//! transfer onto the illiquid quotes, extract the density, and compare
//! against the baselines. Stages communicate through CSV/checkpoint files
//! under the output directory, so each is independently re-runnable.

mod commands;
mod config;
mod io;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::ExperimentConfig;

/// Exit codes: 0 success, 1 runtime numeric failure, 2 configuration or
/// schema error.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Runtime(msg) => write!(f, "runtime error: {msg}"),
        }
    }
}

#[derive(Parser)]
#[command(
    name = "deep-lse",
    about = "Recover risk-neutral densities from sparse option quotes",
    version
)]
struct Cli {
    /// Experiment configuration (TOML).
    #[arg(long, global = true, default_value = "configs/bates.toml")]
    config: PathBuf,

    /// Override the simulation / training seeds.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Output directory for all artifacts.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate the liquid proxy, translate it to the illiquid target,
    /// censor quotes, and write the scenario plus dense-truth density.
    Simulate,
    /// Fit the network to the liquid curve of the scenario.
    Pretrain,
    /// Fine-tune the pretrained network on the illiquid quotes with the
    /// divergence-based stopping rule.
    Transfer,
    /// Extract a density from a fitted checkpoint.
    Rnd {
        /// Checkpoint to extract from (default: the transferred one).
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Output CSV path (default: <out>/model_rnd.csv).
        #[arg(long)]
        output: Option<PathBuf>,
    },
    /// Compare the fitted density against the interpolation and parametric
    /// baselines on the evaluation strikes.
    Evaluate {
        /// Option-chain CSV replacing the scenario's illiquid quotes
        /// (columns strike,price,kind,tau,spot,rate,dividend).
        #[arg(long)]
        quotes: Option<PathBuf>,
        /// Truth density CSV replacing the simulated one.
        #[arg(long)]
        truth: Option<PathBuf>,
    },
    /// Print the max-affine slack budget and sandwich diagnostics for a
    /// checkpoint.
    Bounds {
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
}

fn run(cli: &Cli) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(&cli.config)?;
    // Invalid model parameters are a configuration problem, not a runtime one.
    cfg.model()
        .validate()
        .map_err(|e| CliError::Config(e.to_string()))?;
    std::fs::create_dir_all(&cli.out)
        .map_err(|e| CliError::Runtime(format!("cannot create {}: {e}", cli.out.display())))?;
    let paths = commands::Paths {
        out: cli.out.clone(),
    };
    match &cli.command {
        Command::Simulate => commands::simulate(&cfg, cli.seed, &paths),
        Command::Pretrain => commands::pretrain(&cfg, cli.seed, &paths),
        Command::Transfer => commands::transfer(&cfg, cli.seed, &paths),
        Command::Rnd { checkpoint, output } => {
            commands::rnd(&cfg, checkpoint.as_deref(), output.as_deref(), &paths)
        }
        Command::Evaluate { quotes, truth } => {
            commands::evaluate(&cfg, quotes.as_deref(), truth.as_deref(), &paths)
        }
        Command::Bounds { checkpoint } => commands::bounds(&cfg, checkpoint.as_deref(), &paths),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("{err}");
            ExitCode::from(err.exit_code())
        }
    }
}
