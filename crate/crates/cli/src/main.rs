//! `wcs`: certify, recover, construct and sweep from TOML configs.
//!
//! Exit codes: 0 when the property holds (or the run completed cleanly), 2 when
//! it is violated or a sweep row failed, 1 on any error.

mod commands;
mod config;
mod matfile;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "wcs", version, about = "Weighted l1 recovery and exact small-scale certification")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Certify RIP, NSP or robust NSP of a matrix.
    Certify(RunArgs),
    /// Solve the weighted l1 program for given or planted measurements.
    Recover(RunArgs),
    /// Build a sensing matrix or the counterexample bundle and write it to disk.
    Construct(RunArgs),
    /// Run a built-in sweep and write a CSV table plus a JSON summary.
    Experiment(RunArgs),
}

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    /// TOML configuration file.
    #[arg(long)]
    pub config: PathBuf,
    /// Directory for output files.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Overrides every seed in the config.
    #[arg(long)]
    pub seed: Option<u64>,
}

/// What a successful run reports through the exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Holds,
    Fails,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    let args = match &cli.command {
        Command::Certify(a) | Command::Recover(a) | Command::Construct(a) | Command::Experiment(a) => a.clone(),
    };
    if let Some(n) = args.workers {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global() {
            eprintln!("error: could not size the worker pool: {e}");
            return ExitCode::from(1);
        }
    }
    let run = match cli.command {
        Command::Certify(_) => commands::certify::run(&args),
        Command::Recover(_) => commands::recover::run(&args),
        Command::Construct(_) => commands::construct::run(&args),
        Command::Experiment(_) => commands::experiment::run(&args),
    };
    match run {
        Ok(Verdict::Holds) => ExitCode::SUCCESS,
        Ok(Verdict::Fails) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
