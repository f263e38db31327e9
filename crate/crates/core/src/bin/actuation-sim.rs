//! Command-line runner for the named experiments.
//!
//! Exit codes: 0 success, 1 bad input, 2 run failure.

use std::path::PathBuf;
use std::process::ExitCode;

use actuation_sim::experiments::{run_experiment, ExperimentConfig, Scenario};
use clap::Parser;

#[derive(Debug, Parser)]
#[command(name = "actuation-sim", version, about = "Run an actuation-module experiment")]
struct Cli {
    /// tune, step, staircase, trajectory, beam-step, beam-trajectory or disturbance
    scenario: String,
    /// TOML config overlaid on the scenario preset
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides sim.seed
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: out/<scenario>]
    #[arg(long)]
    out: Option<PathBuf>,
    /// Dotted-key override, e.g. controller.gains.kp=2.0 (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

fn bad_input(msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(1)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            };
        }
    };

    let scenario: Scenario = match cli.scenario.parse() {
        Ok(s) => s,
        Err(e) => return bad_input(e),
    };
    let text = match &cli.config {
        Some(path) => match std::fs::read_to_string(path) {
            Ok(t) => Some(t),
            Err(e) => return bad_input(format!("reading {}: {e}", path.display())),
        },
        None => None,
    };
    let config = match ExperimentConfig::build(scenario, text.as_deref(), &cli.overrides, cli.seed) {
        Ok(c) => c,
        Err(e) => return bad_input(e),
    };

    let output = match run_experiment(scenario, &config) {
        Ok(o) => o,
        Err(e) if e.is_bad_input() => return bad_input(e),
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    };

    let dir = cli
        .out
        .unwrap_or_else(|| PathBuf::from("out").join(scenario.name()));
    if let Err(e) = output.write(&dir) {
        eprintln!("error: writing {}: {e}", dir.display());
        return ExitCode::from(2);
    }
    for (label, rec) in &output.runs {
        println!("{label}: {} rows -> {}", rec.rows.len(), dir.join(label).join("run.csv").display());
    }
    println!("metrics -> {}", dir.join("metrics.csv").display());
    ExitCode::SUCCESS
}
