//! Command-line front end for the execidle toolkit.
//!
//! Four subcommands cover the pipeline end to end: `generate` builds
//! synthetic fixtures with ground truth, `analyze` classifies telemetry
//! and accounts time/energy, `preidle` fingerprints and labels what ran
//! right before each idle interval, and `simulate` replays request traces
//! under different power policies.
//!
//! Reproducibility contract: no environment variables are consulted; a
//! rerun with identical inputs, flags, and seed yields a byte-identical
//! bundle (apart from the manifest's wall-clock fields).

mod analyze;
mod generate;
mod manifest;
mod output;
mod preidle;
mod simulate;

use clap::{Parser, Subcommand};

#[derive(Parser)]
#[command(name = "execidle", version, about = "GPU execution-idle analysis toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Classify telemetry and account execution-idle time and energy.
    Analyze(analyze::AnalyzeArgs),
    /// Cluster and label pre-idle activity fingerprints from an analysis bundle.
    Preidle(preidle::PreidleArgs),
    /// Replay a request trace under pool/power configurations.
    Simulate(simulate::SimulateArgs),
    /// Produce synthetic fixtures with ground truth.
    Generate(generate::GenerateArgs),
}

fn main() -> anyhow::Result<()> {
    let cli = Cli::parse();
    match &cli.command {
        Command::Analyze(args) => analyze::run(args),
        Command::Preidle(args) => preidle::run(args),
        Command::Simulate(args) => simulate::run(args),
        Command::Generate(args) => generate::run(args),
    }
}
