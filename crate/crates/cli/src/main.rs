//! `stokes-lab <subcommand> --config FILE [--override key=val]...`
//!
//! Exit status 0 on success, 1 when a configuration or verification check
//! fails, 2 when a numerical method does not converge.

mod commands;
mod config;
mod error;
mod report;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use crate::config::RunConfig;
use crate::error::Failure;

#[derive(Parser)]
#[command(name = "stokes-lab", version, about = "Stokes multipliers, cubic oscillator levels and growth sweeps")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// JSON run configuration.
    #[arg(long, global = true, value_name = "FILE")]
    config: Option<PathBuf>,

    /// `key=value` with a dotted key; the value is parsed as JSON when possible.
    #[arg(long = "override", global = true, value_name = "KEY=VAL")]
    overrides: Vec<String>,
}

#[derive(Subcommand, Clone, Copy)]
enum Command {
    /// Stokes multiplier C0 and connection-identity residuals.
    Sibuya,
    /// Oscillator levels by the spectral and Stokes routes.
    Spectrum,
    /// Matching-equation solutions over the lambda grid.
    Xi0,
    /// Data-norm and lower-bound sweeps with the incompatibility verdict.
    Growth,
    /// Reference bicharacteristic against its closed form.
    Bichar,
    /// Hamilton map at a point of the double characteristic set.
    Hamilton,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Sibuya => "sibuya",
            Command::Spectrum => "spectrum",
            Command::Xi0 => "xi0",
            Command::Growth => "growth",
            Command::Bichar => "bichar",
            Command::Hamilton => "hamilton",
        }
    }
}

fn init_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("STOKES_LAB_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| Failure::config(format!("STOKES_LAB_THREADS={raw} is not a positive integer")))?;
    rayon::ThreadPoolBuilder::new().num_threads(n).build_global().map_err(|e| Failure::config(e.to_string()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    init_threads()?;
    let path = cli.config.ok_or_else(|| Failure::config("--config FILE is required".into()))?;
    let cfg = RunConfig::load(&path, &cli.overrides)?;
    let start = Instant::now();
    let out = match cli.command {
        Command::Sibuya => commands::sibuya(&cfg),
        Command::Spectrum => commands::spectrum(&cfg),
        Command::Xi0 => commands::xi0(&cfg),
        Command::Growth => commands::growth(&cfg),
        Command::Bichar => commands::bichar(&cfg),
        Command::Hamilton => commands::hamilton(&cfg),
    }?;
    let name = cli.command.name();
    let json = report::write(name, &cfg, &out, start.elapsed().as_secs_f64())?;
    println!("{}", serde_json::to_string_pretty(&out.summary).expect("summary serializes"));
    for c in &out.checks {
        println!("{:<24} {:>12.4e}  limit {:.1e}  {}", c.metric, c.value, c.limit, if c.passed { "ok" } else { "FAILED" });
    }
    println!("report: {}", json.display());
    match out.first_failure() {
        Some(c) => Err(Failure::Verification {
            metric: c.metric.clone(),
            detail: format!("{:e} does not meet the limit {:e}", c.value, c.limit),
        }),
        None => Ok(()),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("stokes-lab: {f}");
            f.exit_code()
        }
    }
}
