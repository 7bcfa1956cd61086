//! `aht` — experiment runner for the regularized primal-dual flow.
//!
//! Exit codes: 0 success, 2 configuration error, 3 numeric failure,
//! 4 schedule certification failure.

mod config;
mod runner;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use config::{ExperimentConfig, PValue, ScheduleSpec};
use runner::CliError;

#[derive(Parser)]
#[command(name = "aht", version, about = "Primal-dual flow with vanishing Tikhonov regularization: integrate, certify schedules, fit decay rates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Integrate the flow and write trajectory, metric, and rate CSVs
    Run(ExperimentArgs),
    /// Certify a schedule against the decisive sign conditions
    CheckSchedule(CheckScheduleArgs),
    /// Compute the viscosity curve on the sample grid
    Viscosity(ExperimentArgs),
    /// Fit tail decay exponents and envelope constants
    Rates(ExperimentArgs),
    /// Write the canned scalar-saddle data sets (fig1 or fig2)
    Reproduce(ReproduceArgs),
}

#[derive(Args)]
struct ExperimentArgs {
    /// Experiment configuration (TOML)
    #[arg(long)]
    config: PathBuf,
    /// Override the output directory
    #[arg(long)]
    out: Option<PathBuf>,
    /// Override the integration horizon
    #[arg(long)]
    horizon: Option<f64>,
    /// Override the number of log-spaced samples
    #[arg(long)]
    samples: Option<usize>,
    /// Deterministic execution (always on; accepted for compatibility)
    #[arg(long)]
    seedless: bool,
}

#[derive(Args)]
struct CheckScheduleArgs {
    /// Read the schedule from an experiment config (TOML)
    #[arg(long, conflicts_with_all = ["family", "p", "c", "a", "t0"])]
    config: Option<PathBuf>,
    /// Schedule family: power, power_shifted, exponential
    #[arg(long)]
    family: Option<String>,
    /// Power exponent
    #[arg(long)]
    p: Option<f64>,
    /// Shift offset
    #[arg(long)]
    c: Option<f64>,
    /// Exponential decay rate
    #[arg(long)]
    a: Option<f64>,
    /// Schedule start time
    #[arg(long)]
    t0: Option<f64>,
    /// Certification horizon
    #[arg(long, default_value_t = 100.0)]
    horizon: f64,
}

#[derive(Args)]
struct ReproduceArgs {
    /// Data set to write: fig1 or fig2
    target: String,
    /// Output directory
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn load_config(args: &ExperimentArgs) -> Result<ExperimentConfig, CliError> {
    let text = std::fs::read_to_string(&args.config).map_err(|e| {
        CliError::Config(format!("cannot read {}: {e}", args.config.display()))
    })?;
    let mut config = ExperimentConfig::from_toml(&text).map_err(CliError::Config)?;
    if let Some(out) = &args.out {
        config.output.dir = out.clone();
    }
    if let Some(horizon) = args.horizon {
        config.integrator.t_end = horizon;
    }
    if let Some(samples) = args.samples {
        config.integrator.samples = samples;
    }
    Ok(config)
}

fn check_schedule(args: &CheckScheduleArgs) -> Result<bool, CliError> {
    let spec = if let Some(path) = &args.config {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        ExperimentConfig::from_toml(&text).map_err(CliError::Config)?.schedule
    } else {
        let family = args
            .family
            .clone()
            .ok_or_else(|| CliError::Config("pass --config or --family".into()))?;
        ScheduleSpec {
            family,
            p: args.p.map(PValue::Single),
            c: args.c,
            a: args.a,
            t0: args
                .t0
                .ok_or_else(|| CliError::Config("--t0 is required with --family".into()))?,
        }
    };
    runner::cmd_check_schedule(&spec, args.horizon)
}

fn dispatch(cli: Cli) -> Result<i32, CliError> {
    match cli.command {
        Command::Run(args) => {
            runner::cmd_run(load_config(&args)?)?;
            Ok(0)
        }
        Command::Viscosity(args) => {
            runner::cmd_viscosity(load_config(&args)?)?;
            Ok(0)
        }
        Command::Rates(args) => {
            runner::cmd_rates(load_config(&args)?)?;
            Ok(0)
        }
        Command::CheckSchedule(args) => {
            let certified = check_schedule(&args)?;
            Ok(if certified { 0 } else { 4 })
        }
        Command::Reproduce(args) => {
            runner::cmd_reproduce(&args.target, args.out)?;
            Ok(0)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(err) => {
            eprintln!("error: {}", err.message());
            ExitCode::from(err.exit_code() as u8)
        }
    }
}
