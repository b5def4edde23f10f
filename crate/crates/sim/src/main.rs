use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ddnfs_sim::{evaluate, Sim, SimConfig};

/// Run a ddnfs simulation scenario.
#[derive(Parser)]
#[command(name = "ddnfs-sim", version)]
struct Args {
    /// Scenario file (key = value settings plus workload lines).
    scenario: PathBuf,
    /// Override the scenario seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Run this many consecutive seeds starting at the scenario seed.
    #[arg(long, default_value_t = 1)]
    seeds: u64,
    /// Print every message sent.
    #[arg(long)]
    trace: bool,
    /// Emit line-delimited JSON records instead of the summary.
    #[arg(long)]
    json: bool,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let text = match std::fs::read_to_string(&args.scenario) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("ddnfs-sim: {}: {e}", args.scenario.display());
            return ExitCode::from(1);
        }
    };
    let mut config = match SimConfig::parse(&text) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("ddnfs-sim: {}: {e}", args.scenario.display());
            return ExitCode::from(2);
        }
    };
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    let first = config.seed;
    let mut failed = false;
    for seed in first..first + args.seeds.max(1) {
        config.seed = seed;
        let mut sim = match Sim::new(config.clone()) {
            Ok(s) => s,
            Err(e) => {
                eprintln!("ddnfs-sim: {e}");
                return ExitCode::from(2);
            }
        };
        if args.trace {
            sim = sim.with_trace();
        }
        let metrics = sim.run_to_end();
        if args.trace {
            for line in sim.trace() {
                println!("{line}");
            }
        }
        let outcome = evaluate(metrics, &config.expectations);
        if args.json {
            for record in outcome.metrics.records() {
                println!("{record}");
            }
        } else {
            println!("== seed {seed}");
            print!("{}", outcome.metrics.summary());
        }
        if !config.expectations.is_empty() {
            println!("seed {seed}: {}", outcome.report());
        }
        failed |= !outcome.passed();
    }
    if failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    }
}
