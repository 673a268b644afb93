use clap::{Args, Parser, Subcommand};
use goodput::config::{parse_config, Scenario};
use goodput::scenario::run_scenario;
use goodput::Error;
use std::path::PathBuf;
use std::process::ExitCode;

/// Goodput-based power control, scheduling, and flow control experiments.
///
/// Every subcommand reads a TOML config, runs one scenario, and writes
/// deterministic CSV artifacts (plus a manifest per file) to the output
/// directory. Exit status: 0 on success, 1 on invalid input or IO
/// failure, 2 when an iterative solver did not converge.
#[derive(Parser)]
#[command(name = "goodput", version, about, long_about = None)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check structural properties of the outage success probability
    /// and goodput curves on a configured link system.
    Props(RunArgs),
    /// Enumerate the achievable goodput region over a power grid,
    /// optionally under partial packet retention.
    Region(RunArgs),
    /// Run the distributed power and price update to a stationary
    /// point and compare it against a brute-force oracle.
    Game(RunArgs),
    /// Run the full cross-layer loop: flow control, backpressure
    /// routing, and game-based scheduling.
    Num(RunArgs),
    /// Simulate the slotted queueing network and classify stability.
    Sim(RunArgs),
    /// Reproduce the built-in study sweeps and regions.
    Figures(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Experiment config (TOML). Scenarios with built-in parameters,
    /// like `figures`, run without one.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed. Overrides the seed in the config; defaults to 0.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for CSV artifacts, created if absent.
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (scenario, args) = match cli.command {
        Command::Props(a) => (Scenario::Props, a),
        Command::Region(a) => (Scenario::Region, a),
        Command::Game(a) => (Scenario::Game, a),
        Command::Num(a) => (Scenario::Num, a),
        Command::Sim(a) => (Scenario::Sim, a),
        Command::Figures(a) => (Scenario::Figures, a),
    };

    let config_text = match &args.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(text) => text,
            Err(e) => {
                eprintln!("error: reading {}: {e}", path.display());
                return ExitCode::from(1);
            }
        },
        None => String::new(),
    };
    let config = match parse_config(&config_text) {
        Ok(config) => config,
        Err(e) => return report(e),
    };
    let seed = args.seed.or(config.seed).unwrap_or(0);

    match run_scenario(scenario, &config, &config_text, seed, &args.out) {
        Ok(outcome) => {
            for file in &outcome.files {
                println!("wrote {}", file.display());
            }
            if outcome.converged {
                ExitCode::SUCCESS
            } else {
                eprintln!("error: solver did not converge within the round limit");
                ExitCode::from(2)
            }
        }
        Err(e) => report(e),
    }
}

fn report(e: Error) -> ExitCode {
    match e {
        Error::ConfigValidation(errors) => {
            for msg in &errors {
                eprintln!("error: {msg}");
            }
            ExitCode::from(1)
        }
        Error::NonConvergence(msg) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        other => {
            eprintln!("error: {other}");
            ExitCode::from(1)
        }
    }
}
