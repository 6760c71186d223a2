//! Experiment front-end for the dpopnet simulator: config parsing, the
//! `run`/`sweep`/`lp`/`repro` subcommands, and CSV/JSON emission.

use std::fmt;

pub mod commands;
pub mod config;

pub use commands::{cmd_lp, cmd_repro, cmd_run, cmd_sweep, Overrides, REPRO_FIGURES};
pub use config::{ExperimentConfig, NetworkRef, ResolvedExperiment, Tuning};

/// Command failures, split by exit code: usage/config problems exit 2,
/// runtime failures exit 1.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Runtime(msg) => write!(f, "runtime error: {msg}"),
        }
    }
}

impl std::error::Error for CliError {}
