//! `rsp`: config-driven driver for the preparation, bounds, tomography and
//! distillation simulations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod commands;
mod config;

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

#[derive(Debug, Parser)]
#[command(name = "rsp", version, about = "Remote state preparation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// TOML run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the seed in the config file.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; defaults to `output.dir` from the config, then `out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Characterize the resource, then prepare and tomograph every target.
    Prepare {
        #[command(flatten)]
        common: Common,
    },
    /// Preparable-state ellipsoid, purity bounds and a Monte Carlo cloud.
    Bounds {
        #[command(flatten)]
        common: Common,
        /// Number of random filters to sample.
        #[arg(long)]
        samples: Option<usize>,
    },
    /// Maximum-likelihood reconstruction from a count record (JSON).
    Tomo {
        /// Count record with `labels`, `counts`, `n0` and `seed`.
        counts: PathBuf,
        #[arg(long, default_value = "out")]
        out: PathBuf,
    },
    /// Filter a partially entangled pure state to a Bell state, then use it
    /// for preparation.
    Distill {
        #[command(flatten)]
        common: Common,
    },
}

/// Failure classes and their exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Unreadable, malformed or invalid input (exit 2).
    Input(String),
    /// An optimizer or reconstruction did not converge (exit 3).
    Numerical(String),
    /// Writing results failed (exit 1).
    Io(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            Self::Io(_) => 1,
            Self::Input(_) => 2,
            Self::Numerical(_) => 3,
        }
    }

    /// Classifies a library error, prefixing `context`.
    pub fn from_core(context: &str, error: rsp_core::RspError) -> Self {
        use rsp_core::RspError::*;
        let message = format!("{context}: {error}");
        match error {
            SettingsNotConverged { .. } | TomographyNotConverged { .. } | Inconsistent { .. } => {
                Self::Numerical(message)
            }
            _ => Self::Input(message),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Input(m) => write!(f, "input error: {m}"),
            Self::Numerical(m) => write!(f, "numerical error: {m}"),
            Self::Io(m) => write!(f, "i/o error: {m}"),
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Prepare { common } => {
            let run = commands::RunContext::new(&common.config, common.seed, common.out)?;
            commands::prepare(&run)
        }
        Command::Bounds { common, samples } => {
            let run = commands::RunContext::new(&common.config, common.seed, common.out)?;
            commands::bounds(&run, samples)
        }
        Command::Tomo { counts, out } => commands::tomo(&counts, &out),
        Command::Distill { common } => {
            let run = commands::RunContext::new(&common.config, common.seed, common.out)?;
            commands::distill(&run)
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("rsp: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
