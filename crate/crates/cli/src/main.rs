//! `cfpf` — cell-free massive MIMO proportional-fairness experiments.

use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::{Parser, Subcommand};

use cfpf_tools::config::{load_config, RunConfig};
use cfpf_tools::pipeline;

#[derive(Parser)]
#[command(
    name = "cfpf",
    about = "Uplink proportional-fairness power allocation in cell-free massive MIMO: \
             generate solver-labeled datasets, train the PowerRDN power predictor, and \
             compare both on spectral efficiency, fairness, and runtime",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a solver-labeled dataset.
    Generate {
        /// Run configuration (JSON).
        #[arg(long)]
        config: PathBuf,
        /// Sample count; defaults to the config's dataset.count.
        #[arg(long)]
        count: Option<u64>,
        /// Output directory for dataset.cfpf, manifest.json, and the
        /// resolved config.
        #[arg(long)]
        out: PathBuf,
        /// Worker threads (0 = all cores).
        #[arg(long, default_value_t = 0)]
        jobs: usize,
    },
    /// Drop one network and run the alternating solver.
    Solve {
        #[arg(long)]
        config: PathBuf,
        /// Realization seed; defaults to the config's master seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory for solve.json and the resolved config.
        #[arg(long, default_value = "solve_out")]
        out: PathBuf,
    },
    /// Train the power predictor on a generated dataset.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Dataset file; defaults to the config's paths.data.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Output directory for checkpoint.cfnn, curve.csv, and the
        /// resolved config.
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare solver and network on the held-out test split.
    Eval {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        /// Model checkpoint; defaults to the config's paths.checkpoint.
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        /// Output directory for summary.json, cdf.csv, histogram.csv, and
        /// the resolved config.
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-instance timing: full solver vs. inference plus one filter pass.
    Bench {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long, default_value = "bench_out")]
        out: PathBuf,
        /// Cap on benchmarked test instances.
        #[arg(long)]
        samples: Option<usize>,
    },
}

fn resolve_data(cfg: &RunConfig, flag: Option<PathBuf>) -> Result<PathBuf> {
    match flag.or_else(|| cfg.paths.data.clone()) {
        Some(p) => Ok(p),
        None => bail!("no dataset given: pass --data or set paths.data in the config"),
    }
}

fn resolve_checkpoint(cfg: &RunConfig, flag: Option<PathBuf>) -> Result<PathBuf> {
    match flag.or_else(|| cfg.paths.checkpoint.clone()) {
        Some(p) => Ok(p),
        None => {
            bail!("no checkpoint given: pass --checkpoint or set paths.checkpoint in the config")
        }
    }
}

fn main() -> Result<()> {
    let cli = Cli::parse();
    match cli.command {
        Command::Generate {
            config,
            count,
            out,
            jobs,
        } => {
            let cfg = load_config(&config)?;
            let count = count.unwrap_or(cfg.dataset.count);
            if count == 0 {
                bail!("--count must be >= 1");
            }
            pipeline::cmd_generate(&cfg, count, &out, jobs)
        }
        Command::Solve { config, seed, out } => {
            let cfg = load_config(&config)?;
            let seed = seed.unwrap_or(cfg.master_seed);
            pipeline::cmd_solve(&cfg, seed, &out)
        }
        Command::Train { config, data, out } => {
            let cfg = load_config(&config)?;
            let data = resolve_data(&cfg, data)?;
            pipeline::cmd_train(&cfg, &data, &out)
        }
        Command::Eval {
            config,
            data,
            checkpoint,
            out,
        } => {
            let cfg = load_config(&config)?;
            let data = resolve_data(&cfg, data)?;
            let checkpoint = resolve_checkpoint(&cfg, checkpoint)?;
            pipeline::cmd_eval(&cfg, &data, &checkpoint, &out)
        }
        Command::Bench {
            config,
            data,
            checkpoint,
            out,
            samples,
        } => {
            let cfg = load_config(&config)?;
            let data = resolve_data(&cfg, data)?;
            let checkpoint = resolve_checkpoint(&cfg, checkpoint)?;
            pipeline::cmd_bench(&cfg, &data, &checkpoint, &out, samples)
        }
    }
}
