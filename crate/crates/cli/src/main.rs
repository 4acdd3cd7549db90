//! `cohmux`: worked example, configured runs, sweeps, Monte Carlo and oracle checks.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 tolerance failure.

mod commands;
mod config;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use config::{Format, Mode, RunConfig};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] cohmux::Error),
}

#[derive(Parser, Debug)]
#[command(name = "cohmux", version, about = "Coherent-state qubit multiplexing simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    /// JSON run configuration.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    trials: Option<u64>,
    #[arg(long, global = true, value_enum)]
    format: Option<Format>,
    /// Absolute tolerance for pass/fail checks.
    #[arg(long, global = true)]
    tolerance: Option<f64>,
    #[arg(long, global = true, value_enum)]
    mode: Option<Mode>,
    /// Output file; stdout when absent.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Three users at alpha=2, M=10 against reference stage probabilities.
    DemoExample,
    /// One configured pipeline in analytic, enumerate or Monte Carlo mode.
    Run,
    /// Analytic figures over a parameter grid.
    Sweep,
    /// Monte Carlo trajectories of the configured pipeline.
    Sample,
    /// Coherent-state engine against the truncated number basis.
    OracleCheck,
}

impl Cli {
    fn config(&self) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p)?,
            None => RunConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(f) = self.format {
            cfg.format = f;
        }
        if let Some(t) = self.tolerance {
            cfg.tolerance = Some(t);
        }
        if let Some(m) = self.mode {
            cfg.mode = m;
        }
        Ok(cfg)
    }
}

fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("COHMUX_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("COHMUX_THREADS must be a positive integer, got {v:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Usage(e.to_string()))
}

fn execute(cli: &Cli) -> Result<bool, CliError> {
    configure_threads()?;
    let cfg = cli.config()?;
    let mut w = output::sink(cli.out.as_deref())?;
    match cli.command {
        Command::DemoExample => commands::demo_example(
            cfg.format,
            cfg.tolerance.unwrap_or(commands::STAGE_TOLERANCE),
            &mut *w,
        ),
        Command::Run => commands::run(&cfg, &mut *w),
        Command::Sweep => commands::sweep_grid(&cfg.sweep.clone().unwrap_or_default(), cfg.format, &mut *w),
        Command::Sample => commands::sample(&cfg, &mut *w),
        Command::OracleCheck => commands::oracle_check(
            cli.trials.unwrap_or(200),
            cfg.seed,
            cfg.tolerance.unwrap_or(commands::ORACLE_TOLERANCE),
            cfg.format,
            &mut *w,
        ),
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
    match execute(&cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => {
            eprintln!("cohmux: tolerance check failed");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("cohmux: {e}");
            ExitCode::from(1)
        }
    }
}
