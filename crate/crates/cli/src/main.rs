//! Weekly epidemic forecasting pipeline.
//!
//! Subcommands mirror the workflow: `ingest` normalizes the raw CSVs,
//! `fit` trains the urgency network and fits the trend model, `forecast`
//! produces 1- to 4-week mixture forecasts from an origin week, and
//! `evaluate` runs the rolling-origin comparison of SIMLR, tf-v-SIR and
//! SLOW.
//!
//! Exit codes: 0 success, 1 user/config error, 2 data error, 3 internal
//! error.

mod commands;
mod config;

use clap::{Parser, Subcommand};
use std::path::PathBuf;
use thiserror::Error;

use config::{Overrides, RunConfig};

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] simlr::data::DataError),
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Internal(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Internal(format!("io error: {e}"))
    }
}

impl From<simlr::pgm::PgmError> for CliError {
    fn from(e: simlr::pgm::PgmError) -> Self {
        // Problems in the CPT/dataset/weights files are configuration
        // mistakes, not internal failures.
        match e {
            simlr::pgm::PgmError::TrainingDiverged { .. } => CliError::Internal(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<simlr::forecast::ForecastError> for CliError {
    fn from(e: simlr::forecast::ForecastError) -> Self {
        use simlr::forecast::ForecastError::*;
        match e {
            ColdStart { .. } | NoCompleteWeeks | PolicyGap { .. } => CliError::Data(
                simlr::data::DataError::MisalignedSeries {
                    problem: e.to_string(),
                },
            ),
            Fit(err) => CliError::Data(simlr::data::DataError::MisalignedSeries {
                problem: err.to_string(),
            }),
            Sir(err) => CliError::Internal(err.to_string()),
            Pgm(err) => CliError::from(err),
        }
    }
}

impl From<simlr::eval::EvalError> for CliError {
    fn from(e: simlr::eval::EvalError) -> Self {
        use simlr::eval::EvalError::*;
        match e {
            BadOrigin { .. } => CliError::Config(e.to_string()),
            Data(err) => CliError::Data(err),
            Forecast(err) => CliError::from(err),
            LengthMismatch { .. } | AllZeroActual => CliError::Internal(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Internal(format!("serialization error: {e}"))
    }
}

#[derive(Parser)]
#[command(name = "simlr", version, about = "SIR forecasting with policy-aware time-varying parameters")]
struct Cli {
    /// Run configuration file.
    #[arg(long, global = true, default_value = "simlr.toml")]
    config: PathBuf,
    /// Override the configured region.
    #[arg(long, global = true)]
    region: Option<String>,
    /// Override the configured output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Override the configured seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Normalize the raw CSVs for the region and write the processed series.
    Ingest,
    /// Train the urgency network and fit weekly rates plus the trend model.
    Fit,
    /// Forecast 1..=horizon weeks from an origin Sunday.
    Forecast {
        /// Sunday starting the first forecast week; defaults to the week
        /// after the last complete data week.
        #[arg(long)]
        origin: Option<chrono::NaiveDate>,
        #[arg(long, default_value_t = 4)]
        horizon: u8,
    },
    /// Rolling-origin evaluation of SIMLR, tf-v-SIR and SLOW.
    Evaluate,
}

fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    let overrides = Overrides {
        region: cli.region.clone(),
        out_dir: cli.out.clone(),
        seed: cli.seed,
    };

    let result = RunConfig::load(&cli.config, &overrides).and_then(|config| match cli.command {
        Command::Ingest => commands::ingest::run(&config),
        Command::Fit => commands::fit::run(&config),
        Command::Forecast { origin, horizon } => commands::forecast::run(&config, origin, horizon),
        Command::Evaluate => commands::evaluate::run(&config),
    });

    if let Err(err) = result {
        eprintln!("error: {err}");
        std::process::exit(err.exit_code());
    }
}
