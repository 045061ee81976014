//! `spinewalk` command-line driver.
//!
//! Exit codes: 0 success, 2 configuration or usage error, 3 I/O error,
//! 4 simulation failure or unstable episode, 5 malformed input data,
//! 6 empty input or nothing to report.

mod commands;
mod config;
mod error;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{HildebrandArgs, OptimizeArgs, ScoreArgs, SweepArgs, TransitionArgs};
use config::ExperimentArgs;

/// Quadruped spine locomotion experiments. Outputs go under
/// $SPINEWALK_OUT (default `out`).
#[derive(Debug, Parser)]
#[command(name = "spinewalk", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run one episode; writes log.csv and summary.json.
    Simulate(ExperimentArgs),
    /// CoT against speed for each gait and strategy.
    Sweep(SweepArgs),
    /// Walk/trot transition speed from two CoT curves.
    Transition(TransitionArgs),
    /// Footfall grid of a logged episode as PGM, SVG and JSON.
    Hildebrand(HildebrandArgs),
    /// Grid search over spine strategy constants.
    Optimize(OptimizeArgs),
    /// Score a subjective study votes file.
    Score(ScoreArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Simulate(a) => commands::simulate(a),
        Command::Sweep(a) => commands::sweep(a),
        Command::Transition(a) => commands::transition(a),
        Command::Hildebrand(a) => commands::hildebrand_cmd(a),
        Command::Optimize(a) => commands::optimize(a),
        Command::Score(a) => commands::score(a),
    };
    match result {
        Ok(dir) => {
            println!("wrote {}", dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("spinewalk: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
