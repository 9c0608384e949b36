//! `bia-sim`: inspect, simulate and verify blind interference alignment schemes.
//!
//! Every command prints one JSON record per line. Errors print a record with
//! an `error` field and exit non-zero; so does any failed check.

mod commands;
mod config;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::json;

use bia_core::{BiaError, Result};
use config::ExperimentConfig;

#[derive(Debug, Parser)]
#[command(name = "bia-sim", version, about = "Blind interference alignment scheme simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// TOML file whose entries override the flags.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(flatten)]
    args: ExperimentConfig,
}

#[derive(Debug, Clone, Copy, Subcommand)]
enum Command {
    /// Scheme sizes and degrees-of-freedom values.
    Dims,
    /// Per-receiver switching patterns with their alignment verdicts.
    Pattern,
    /// One end-to-end run, noiseless or at one SNR.
    Simulate,
    /// Monte Carlo rate curve and its high-SNR slope.
    Sweep,
    /// Map, shuffle and reduce a random job and compare against a central oracle.
    MapreduceDemo,
    /// Alignment, rank, decoder and formula checks over a parameter grid.
    Verify,
}

const EXIT_FAILED_CHECK: u8 = 1;
const EXIT_ERROR: u8 = 2;

fn error_record(kind: &str, message: &str) -> String {
    json!({ "error": kind, "message": message }).to_string()
}

fn run(cli: Cli) -> Result<commands::Outcome> {
    let config = match &cli.config {
        Some(path) => cli.args.overlay_file(path)?,
        None => cli.args,
    };
    let outcome = match cli.command {
        Command::Dims => commands::dims(&config),
        Command::Pattern => commands::pattern(&config),
        Command::Simulate => commands::simulate(&config),
        Command::Sweep => commands::sweep(&config),
        Command::MapreduceDemo => commands::mapreduce_demo(&config),
        Command::Verify => commands::verify(&config),
    }?;
    let mut text = String::new();
    for r in &outcome.records {
        text.push_str(&r.to_string());
        text.push('\n');
    }
    let io = |e: std::io::Error| BiaError::InvalidRun(format!("write failed: {e}"));
    match &config.out {
        Some(path) => std::fs::write(path, &text).map_err(io)?,
        None => std::io::stdout().lock().write_all(text.as_bytes()).map_err(io)?,
    }
    if let (Some(path), Some(csv)) = (&config.csv, &outcome.csv) {
        std::fs::write(path, csv).map_err(io)?;
    }
    Ok(outcome)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            println!("{}", error_record("usage", e.render().to_string().lines().next().unwrap_or("")));
            return ExitCode::from(EXIT_ERROR);
        }
    };
    match run(cli) {
        Ok(o) if o.passed => ExitCode::SUCCESS,
        Ok(_) => ExitCode::from(EXIT_FAILED_CHECK),
        Err(e) => {
            println!("{}", error_record(e.kind(), &e.to_string()));
            ExitCode::from(EXIT_ERROR)
        }
    }
}
