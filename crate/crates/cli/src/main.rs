use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use ddpinn_cli::commands::{self, CommonArgs, EvaluateArgs};

/// Physics-informed surrogate models of dynamical systems: train, evaluate,
/// benchmark and simulate.
#[derive(Parser)]
#[command(name = "ddpinn", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train a model from a JSON config (see README for presets).
    Train {
        config: PathBuf,
        /// Override the training seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory (default: a fresh directory under ./runs).
        #[arg(long)]
        out_dir: Option<PathBuf>,
        /// Worker threads for batch gradients.
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Evaluate a checkpoint in self-loop against RK4 ground truth.
    Evaluate {
        checkpoint: PathBuf,
        /// Inline JSON signal spec overriding the config's test signal.
        #[arg(long)]
        signal: Option<String>,
        /// Evaluation horizon in seconds.
        #[arg(long)]
        horizon: Option<f64>,
        /// Second checkpoint for a prediction-latency ratio.
        #[arg(long)]
        baseline: Option<PathBuf>,
        /// Use the RK4 integrator in place of the model (self-check).
        #[arg(long)]
        oracle: bool,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Train two configs on one system and compare per-epoch wall-clock,
    /// losses and prediction latency.
    Benchmark {
        config_a: PathBuf,
        config_b: PathBuf,
        /// Shared epoch budget for both runs (0 keeps each config's own).
        #[arg(long, default_value_t = 5)]
        epochs: usize,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Integrate a benchmark system (msd, chain, twolink) and export the
    /// trajectory.
    Simulate {
        system: String,
        /// Inline JSON signal spec (default: the system's test signal).
        #[arg(long)]
        signal: Option<String>,
        /// Duration in seconds.
        #[arg(long, default_value_t = 1.0)]
        duration: f64,
        /// Integrator step in seconds.
        #[arg(long, default_value_t = 1e-3)]
        step: f64,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out_dir: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Train {
            config,
            seed,
            out_dir,
            threads,
        } => commands::cmd_train(
            &config,
            &CommonArgs {
                seed,
                out_dir,
                threads,
            },
        ),
        Command::Evaluate {
            checkpoint,
            signal,
            horizon,
            baseline,
            oracle,
            seed,
            out_dir,
            threads,
        } => commands::cmd_evaluate(
            &EvaluateArgs {
                checkpoint: &checkpoint,
                signal_json: signal.as_deref(),
                horizon_s: horizon,
                baseline: baseline.as_deref(),
                oracle,
            },
            &CommonArgs {
                seed,
                out_dir,
                threads,
            },
        ),
        Command::Benchmark {
            config_a,
            config_b,
            epochs,
            seed,
            out_dir,
            threads,
        } => commands::cmd_benchmark(
            &config_a,
            &config_b,
            epochs,
            &CommonArgs {
                seed,
                out_dir,
                threads,
            },
        ),
        Command::Simulate {
            system,
            signal,
            duration,
            step,
            seed,
            out_dir,
        } => commands::cmd_simulate(
            &system,
            signal.as_deref(),
            duration,
            step,
            &CommonArgs {
                seed,
                out_dir,
                threads: None,
            },
        ),
    };
    match result {
        Ok(dir) => {
            println!("outputs written to {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
