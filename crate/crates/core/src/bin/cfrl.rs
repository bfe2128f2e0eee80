use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cfrl::pipeline::{execute_file, Command, Stage};

/// Counterfactually fair offline reinforcement learning pipeline.
#[derive(Debug, Parser)]
#[command(name = "cfrl", version)]
struct Cli {
    /// Pipeline config (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output_dir` in the config.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
    /// Stop `run` after this stage (data, split, preprocess, train,
    /// fit_environment, evaluate, compare).
    #[arg(long, value_parser = parse_stage)]
    stage: Option<Stage>,
    /// Log progress at debug level.
    #[arg(long, short, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Option<Sub>,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Sub {
    /// Every stage in order (the default).
    Run,
    /// Sample or load trajectories into data/trajectories.csv.
    Simulate,
    /// Load, split and preprocess the training set.
    Preprocess,
    /// Fit the agent on the preprocessed training set.
    Train,
    /// Value and counterfactual unfairness of models/agent.json.
    Evaluate,
    /// Table of the agent against the configured baselines.
    Compare,
}

fn parse_stage(name: &str) -> Result<Stage, String> {
    Stage::parse(name).ok_or_else(|| format!("unknown stage '{name}'"))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = if cli.verbose { "debug" } else { "info" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let Some(config) = cli.config else {
        eprintln!("error: --config <path> is required");
        return ExitCode::from(Stage::Config.exit_code() as u8);
    };
    let command = match cli.command.unwrap_or(Sub::Run) {
        Sub::Run => Command::Run,
        Sub::Simulate => Command::Simulate,
        Sub::Preprocess => Command::Preprocess,
        Sub::Train => Command::Train,
        Sub::Evaluate => Command::Evaluate,
        Sub::Compare => Command::Compare,
    };
    match execute_file(&config, cli.output, command, cli.stage) {
        Ok(root) => {
            log::info!("artifacts written to {}", root.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
