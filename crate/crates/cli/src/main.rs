//! `quadlab` command-line entry point.

mod commands;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

/// Directory searched for relative `--config` paths and for `quadlab.conf`.
pub const CONFIG_DIR_ENV: &str = "QUADLAB_CONFIG_DIR";

#[derive(Debug, Parser)]
#[command(name = "quadlab", version, about = "Point-mass planning, quadrotor simulation and PPO training")]
pub struct Cli {
    /// Config file of `key = value` lines.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set train.epochs=4`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE", global = true)]
    pub overrides: Vec<String>,
    /// Seed for training and evaluation streams.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Minimum-time point-mass trajectory through waypoints.
    Plan {
        #[arg(long)]
        waypoints: PathBuf,
        /// Sampling rate of the written trajectory (Hz).
        #[arg(long, default_value_t = 100.0)]
        rate: f64,
    },
    /// One episode with the tracker or a trained policy; writes a per-step trace.
    Simulate {
        #[arg(long)]
        policy: Option<PathBuf>,
    },
    /// PPO training with the spawn-range curriculum.
    Train {
        /// Train at the widest range from the first iteration.
        #[arg(long)]
        no_curriculum: bool,
        /// Continue from a checkpoint written by an earlier run.
        #[arg(long)]
        resume: Option<PathBuf>,
    },
    /// Deterministic rollouts of a trained policy.
    Evaluate {
        #[arg(long)]
        policy: PathBuf,
        #[arg(long)]
        episodes: Option<usize>,
        /// Curriculum stage whose spawn range is evaluated.
        #[arg(long)]
        stage: Option<usize>,
        /// Sample actions from the policy distribution instead of the mean.
        #[arg(long)]
        stochastic: bool,
    },
    /// Flight time and speed of the tracker and the policy on waypoint courses.
    Compare {
        #[arg(long)]
        policy: Option<PathBuf>,
        /// Run only the tracker.
        #[arg(long)]
        baseline_only: bool,
        /// Waypoint file; defaults to the built-in line, zigzag and semicircle.
        #[arg(long)]
        waypoints: Option<PathBuf>,
        #[arg(long)]
        velocity_scale: Option<f64>,
    },
    /// Curriculum against no curriculum under one budget and shared seeds.
    Ablate {
        #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2])]
        seeds: Vec<u64>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(e.exit_code())
        }
    }
}
