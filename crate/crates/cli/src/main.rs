//! `sropnet`: generate datasets, train operator networks, evaluate against
//! interpolation baselines, predict fields, and render plots.

use std::process::ExitCode;

use clap::{Parser, Subcommand};
use sropnet::commands::{
    run_evaluate, run_generate, run_plot, run_predict, run_train, EvaluateArgs, GenerateArgs,
    PlotArgs, PredictArgs, TrainArgs,
};

#[derive(Parser)]
#[command(
    name = "sropnet",
    version,
    about = "Operator-network super resolution for forced diffusion problems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a dataset of LR/HR solution pairs.
    Generate(GenerateArgs),
    /// Train an operator network on a dataset.
    Train(TrainArgs),
    /// Score a checkpoint on a held-out dataset.
    Evaluate(EvaluateArgs),
    /// Run one sample through a checkpoint and write field files.
    Predict(PredictArgs),
    /// Render a field file as PGM images and CSV grids.
    Plot(PlotArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(args) => run_generate(args),
        Command::Train(args) => run_train(args),
        Command::Evaluate(args) => run_evaluate(args),
        Command::Predict(args) => run_predict(args),
        Command::Plot(args) => run_plot(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
