//! `celltherm`: simulate, identify, calibrate and estimate cell temperatures
//! from the command line.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use thiserror::Error;

/// Failure classes, mapped to exit codes 2 and 3.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("input error: {0}")]
    Input(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

impl From<celltherm::Error> for CliError {
    fn from(e: celltherm::Error) -> Self {
        if e.is_input_error() {
            CliError::Input(e.to_string())
        } else {
            CliError::Numerical(e.to_string())
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Input(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "celltherm", version, about = "Reduced-order thermal model and temperature estimation for cylindrical cells")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Args)]
pub struct Common {
    /// TOML run configuration; built-in defaults when omitted.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Seed for every random choice the command makes.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    #[value(name = "ekf_z")]
    EkfZ,
    #[value(name = "kf_t3")]
    KfT3,
    #[value(name = "open_loop")]
    OpenLoop,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Open-loop simulation of a drive cycle; probe trace and final field.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cycle: Option<PathBuf>,
        /// Also run the finite-volume oracle and report the largest deviation.
        #[arg(long)]
        oracle: bool,
    },
    /// Synthetic twin: generated cycle, simulated truth, all three estimators.
    Twin {
        #[command(flatten)]
        common: Common,
    },
    /// Identify thermal parameters from measured T1..T4.
    Identify {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cycle: Option<PathBuf>,
    },
    /// Fit the impedance-temperature map from one cycle.
    Calibrate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cycle: Option<PathBuf>,
    },
    /// Run an estimator over a cycle.
    Estimate {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        cycle: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "ekf_z")]
        mode: ModeArg,
        /// Calibration file; required for ekf_z.
        #[arg(long)]
        calibration: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Simulate { common, cycle, oracle } => commands::simulate(&common, cycle, oracle),
        Command::Twin { common } => commands::twin(&common),
        Command::Identify { common, cycle } => commands::identify(&common, cycle),
        Command::Calibrate { common, cycle } => commands::calibrate(&common, cycle),
        Command::Estimate { common, cycle, mode, calibration } => commands::estimate(&common, cycle, mode, calibration),
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("celltherm: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
