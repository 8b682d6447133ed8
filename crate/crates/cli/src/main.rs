//! `m3p`: batch front-end for pricing simulations, estimation, oracle
//! pricing and the scalar lower-bound checks.
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid input.

mod config;
mod error;
mod estimate;
mod lowerbound;
mod plot;
mod price;
mod simulate;

use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "m3p", version, about = "Contextual multi-product pricing under MNL demand")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run replicated M3P simulations and write ledgers plus an aggregate report.
    Simulate(simulate::SimulateArgs),
    /// Fit the constrained MLE to a JSONL sales log.
    Estimate(estimate::EstimateArgs),
    /// Check the scalar-class inequalities on a grid and a policy battery.
    Lowerbound(lowerbound::LowerboundArgs),
    /// Optimal prices for one slate under given parameters.
    Price(price::PriceArgs),
    /// Render regret curves from simulation ledgers to SVG.
    Plot(plot::PlotArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Simulate(a) => simulate::run(a),
        Command::Estimate(a) => estimate::run(a),
        Command::Lowerbound(a) => lowerbound::run(a),
        Command::Price(a) => price::run(a),
        Command::Plot(a) => plot::run(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
