//! `qdftlab`: configuration-driven runner for the transform-path experiments.
//!
//! ```text
//! qdftlab <subcommand> <config-path> [--seed N] [--out DIR] [--replicates R]
//! ```
//!
//! Subcommands: conditions | simulate | decompose-check | decay | fdd-test |
//! anisotropy | avg-freq | path-test | all. The config grammar is documented
//! in `config.rs` and the README. `QDFTLAB_THREADS` caps worker threads;
//! results are identical at any thread count.
//!
//! Exit status: 0 when every verdict passed, 1 when any verdict failed or an
//! experiment errored, 2 on configuration or usage problems.

mod config;
mod output;
mod runner;

use clap::{Args, Parser, Subcommand};
use runner::Action;
use std::path::PathBuf;

#[derive(Parser)]
#[command(name = "qdftlab", version, about = "Quenched transform-path experiment runner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Path to the key = value run configuration.
    config: PathBuf,
    /// Override the master seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the replicate count.
    #[arg(long)]
    replicates: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Summability-condition partial sums and analytic verdicts.
    Conditions(RunArgs),
    /// Write sample trajectories and path plot data.
    Simulate(RunArgs),
    /// Randomized exact-decomposition identity check.
    DecomposeCheck(RunArgs),
    /// Martingale-approximation decay matrix over (r, N).
    Decay(RunArgs),
    /// Fixed-frequency limit-law tests plus the sigma^2 table.
    FddTest(RunArgs),
    /// Variance-split probe at the spectrum frequencies {0, pi}.
    Anisotropy(RunArgs),
    /// Uniform-frequency mixture law test.
    AvgFreq(RunArgs),
    /// Running-max functional test against a Brownian reference.
    PathTest(RunArgs),
    /// Everything above, in order.
    All(RunArgs),
}

impl Command {
    fn split(self) -> (Action, RunArgs) {
        match self {
            Command::Conditions(a) => (Action::Conditions, a),
            Command::Simulate(a) => (Action::Simulate, a),
            Command::DecomposeCheck(a) => (Action::DecomposeCheck, a),
            Command::Decay(a) => (Action::Decay, a),
            Command::FddTest(a) => (Action::FddTest, a),
            Command::Anisotropy(a) => (Action::Anisotropy, a),
            Command::AvgFreq(a) => (Action::AvgFreq, a),
            Command::PathTest(a) => (Action::PathTest, a),
            Command::All(a) => (Action::All, a),
        }
    }
}

fn main() {
    std::process::exit(run());
}

fn run() -> i32 {
    let cli = Cli::parse();
    let (action, args) = cli.command.split();

    let text = match std::fs::read_to_string(&args.config) {
        Ok(text) => text,
        Err(e) => {
            eprintln!("error: cannot read config '{}': {e}", args.config.display());
            return 2;
        }
    };
    let mut config = match config::parse_config(&text) {
        Ok(config) => config,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    if let Some(out) = args.out {
        config.out_dir = out;
    }
    if let Some(replicates) = args.replicates {
        config.replicates = replicates;
    }

    let out_dir = config.out_dir.clone();
    let result = qdftlab_core::with_thread_cap(|| runner::execute(action, &config, &out_dir));
    match result {
        Ok((manifest, code)) => {
            for record in &manifest.experiments {
                println!(
                    "[{}] {} ({} ms) {}",
                    match record.status {
                        runner::Status::Pass => "pass",
                        runner::Status::Fail => "FAIL",
                        runner::Status::Error => "ERROR",
                        runner::Status::Skipped => "skip",
                    },
                    record.id,
                    record.millis,
                    record.detail
                );
            }
            println!(
                "wrote {} files to {} ({} ms total)",
                manifest.files.len(),
                out_dir.display(),
                manifest.total_millis
            );
            code
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            1
        }
    }
}
