mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

use crate::output::Outputs;

/// Learn co-investment networks from daily quotes and analyze them.
#[derive(Debug, Parser)]
#[command(name = "coinvest", version)]
struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Rare ratio: share of pairs kept as edges.
    #[arg(long, global = true)]
    gamma: Option<f64>,
    /// Gate letters for weight extraction, e.g. `igo` or `io`.
    #[arg(long, global = true)]
    gates: Option<String>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override any configuration key, e.g. `--set epochs=200`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE", value_parser = config::parse_override)]
    set: Vec<(String, toml::Value)>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Train one model per slice and trial.
    Train,
    /// Turn trained checkpoints into co-investment networks.
    Extract {
        #[arg(required = true)]
        checkpoints: Vec<PathBuf>,
    },
    /// Build a network with a similarity baseline.
    Baseline { method: BaselineMethod },
    /// Summarize saved networks.
    Analyze {
        task: AnalyzeTask,
        #[arg(required = true)]
        networks: Vec<PathBuf>,
    },
    /// Write a synthetic market with planted co-investment groups.
    Simulate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BaselineMethod {
    Pcc,
    Dtw,
    Vwl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum AnalyzeTask {
    Density,
    TopDegree,
    Components,
    Distances,
    Coverage,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let mut overrides = cli.set.clone();
    if let Some(seed) = cli.seed {
        overrides.push(("seed".into(), toml::Value::Integer(seed as i64)));
    }
    if let Some(gamma) = cli.gamma {
        overrides.push(("gamma".into(), toml::Value::Float(gamma)));
    }
    if let Some(gates) = &cli.gates {
        overrides.push(("gates".into(), toml::Value::String(gates.clone())));
    }
    if let Some(out) = &cli.out {
        overrides.push(("out".into(), toml::Value::String(out.to_string_lossy().into_owned())));
    }

    let outputs = Outputs::default();
    let result = config::load(cli.config.as_deref(), &overrides).and_then(|cfg| match &cli.command {
        Command::Train => commands::train(&cfg, &outputs),
        Command::Extract { checkpoints } => commands::extract(&cfg, checkpoints, &outputs),
        Command::Baseline { method } => commands::baseline(&cfg, *method, &outputs),
        Command::Analyze { task, networks } => commands::analyze(&cfg, *task, networks, &outputs),
        Command::Simulate => commands::simulate(&cfg, &outputs),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            outputs.discard();
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
