//! `gibbslab`: batch front end for sampling, simulation and verification
//! runs described by a JSON experiment configuration.
//!
//! Exit codes: 0 success, 1 a hard invariant failed, 2 configuration error
//! (including unmet experiment prerequisites), 3 runtime abort.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use commands::{CliError, Experiment, Run};

#[derive(Parser)]
#[command(name = "gibbslab", version, about = "Gibbs measures and reflected gradient diffusions: sampling, simulation, diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// Experiment configuration (JSON).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output directory; overrides `output` in the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Cap on worker threads. Results do not depend on it.
    #[arg(long, global = true)]
    workers: Option<usize>,
    /// Replaces the root seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Canonical Metropolis samples.
    Sample,
    /// Reflected Euler–Maruyama trajectories.
    Simulate,
    /// One verification experiment.
    Verify {
        #[arg(value_enum)]
        experiment: Experiment,
    },
    /// Selected experiments across the N/V schedule.
    Sweep,
}

fn run(cli: Cli) -> Result<commands::Outcome, CliError> {
    let path = cli.config.ok_or_else(|| CliError::Config(config::ConfigError::at("--config", "no configuration file given")))?;
    let cfg = config::load(&path, cli.seed)?;
    if let Some(w) = cli.workers {
        if w == 0 {
            return Err(CliError::Config(config::ConfigError::at("--workers", "must be at least 1")));
        }
        rayon::ThreadPoolBuilder::new().num_threads(w).build_global().map_err(|e| CliError::Runtime(e.to_string()))?;
    }
    let out = cli.out.or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("gibbslab-out"));
    let run = Run { out, workers: cli.workers, config_path: path };
    match cli.command {
        Command::Sample => commands::sample(&cfg, &run),
        Command::Simulate => commands::simulate(&cfg, &run),
        Command::Verify { experiment } => commands::verify(&cfg, experiment, &run),
        Command::Sweep => commands::sweep(&cfg, &run),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(o) => ExitCode::from(o.exit_code() as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
