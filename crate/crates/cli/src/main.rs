use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use edgecache::harness::{self, ExperimentConfig, PolicyName};

/// Dynamic content update simulator for cache-enabled base stations.
#[derive(Debug, Parser)]
#[command(name = "edgecache", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Flat key=value configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Run a single seed instead of the configured list.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Write a seeded request trace.
    GenerateTrace(Common),
    /// Run a policy (training learning agents first) and evaluate it.
    Run {
        #[command(flatten)]
        common: Common,
        /// lru, fifo, least, random, threshold, dqn or emrqn.
        #[arg(long)]
        policy: Option<String>,
    },
    /// Train a learning agent, checkpointing after every episode.
    Train {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policy: Option<String>,
    },
    /// Evaluate a trained checkpoint with exploration and learning off.
    Evaluate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        policy: Option<String>,
        /// Checkpoint file; defaults to the one `train` wrote for each seed.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
    },
    /// Hit-rate table over policies, cache sizes and Zipf exponents.
    Compare(Common),
}

fn load(common: &Common, policy: Option<&str>) -> Result<ExperimentConfig> {
    let mut cfg = match &common.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = common.seed {
        cfg.seeds = vec![seed];
    }
    if let Some(out) = &common.out {
        cfg.out = out.clone();
    }
    if let Some(p) = policy {
        cfg.policy = p.parse::<PolicyName>()?;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn print_summary(summary: &harness::Summary) {
    print!("{}", summary.to_text());
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::GenerateTrace(common) => {
            let cfg = load(&common, None)?;
            let path = harness::cmd_generate_trace(&cfg).context("generating trace")?;
            println!("{}", path.display());
        }
        Command::Run { common, policy } => {
            let cfg = load(&common, policy.as_deref())?;
            print_summary(&harness::cmd_run(&cfg).with_context(|| format!("running {}", cfg.policy))?);
        }
        Command::Train { common, policy } => {
            let cfg = load(&common, policy.as_deref())?;
            print_summary(&harness::cmd_train(&cfg).with_context(|| format!("training {}", cfg.policy))?);
        }
        Command::Evaluate {
            common,
            policy,
            checkpoint,
        } => {
            let mut cfg = load(&common, policy.as_deref())?;
            if checkpoint.is_some() {
                cfg.checkpoint = checkpoint;
            }
            print_summary(&harness::cmd_evaluate(&cfg).with_context(|| format!("evaluating {}", cfg.policy))?);
        }
        Command::Compare(common) => {
            let cfg = load(&common, None)?;
            let path = harness::cmd_compare(&cfg).context("comparing policies")?;
            print!("{}", std::fs::read_to_string(&path)?);
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}
