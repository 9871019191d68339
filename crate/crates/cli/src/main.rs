//! skewfuzz: performance-workload fuzzing for partitioned dataflow programs.
//!
//! Exit codes: 0 = symptom triggered (or command completed), 2 = budget
//! exhausted without a trigger, 1 = configuration or I/O error.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::Overrides;

#[derive(Parser)]
#[command(name = "skewfuzz", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct CommonArgs {
    /// Campaign configuration file (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Override the campaign rng seed.
    #[arg(long)]
    rng_seed: Option<u64>,
    /// Override the per-phase iteration budget.
    #[arg(long)]
    max_iterations: Option<u64>,
    /// Override the per-phase wall-clock budget in seconds.
    #[arg(long)]
    time_budget_secs: Option<f64>,
    /// Override the output directory.
    #[arg(long)]
    output: Option<PathBuf>,
    /// Read the seed dataset from part-* files in this directory instead of
    /// the benchmark generator.
    #[arg(long)]
    input_dir: Option<PathBuf>,
}

impl CommonArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            rng_seed: self.rng_seed,
            max_iterations: self.max_iterations,
            time_budget_secs: self.time_budget_secs,
            output: self.output.clone(),
            input_dir: self.input_dir.clone(),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run the phased campaign: UDF fuzzing, pseudo-inverse lift, program
    /// fuzzing.
    Fuzz(CommonArgs),
    /// Run the naive baseline: whole-program fuzzing from the original seed.
    Baseline(CommonArgs),
    /// Execute the program once and dump the full metrics report.
    Run(CommonArgs),
    /// Repeat the phased campaign across M13/M14 weights.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        /// Comma-separated weights to sweep.
        #[arg(long, value_delimiter = ',', required = true)]
        weights: Vec<f64>,
        /// Seeded repetitions per weight.
        #[arg(long, default_value_t = 5)]
        reps: u64,
    },
    /// Materialize a benchmark generator's dataset as part files.
    Gen(CommonArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (common, run): (&CommonArgs, Box<dyn FnOnce(&config::ConfigFile, &Overrides) -> skewfuzz::Result<i32>>) =
        match &cli.command {
            Command::Fuzz(common) => (common, Box::new(commands::cmd_fuzz)),
            Command::Baseline(common) => (common, Box::new(commands::cmd_baseline)),
            Command::Run(common) => (common, Box::new(commands::cmd_run)),
            Command::Gen(common) => (common, Box::new(commands::cmd_gen)),
            Command::Sweep { common, weights, reps } => {
                let weights = weights.clone();
                let reps = *reps;
                (
                    common,
                    Box::new(move |config, overrides| {
                        commands::cmd_sweep(config, overrides, &weights, reps)
                    }),
                )
            }
        };
    let overrides = common.overrides();
    let config = match config::load_config(&common.config) {
        Ok(config) => config,
        Err(err) => {
            eprintln!("error: {err}");
            return ExitCode::from(1);
        }
    };
    match run(&config, &overrides) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(1)
        }
    }
}
