//! Command-line front end for the arithmetic-unit lab: experiment configs,
//! sweep execution with resume, grid exports, numeric self-checks, and
//! report merging.

pub mod config;
pub mod grids;
pub mod io;
pub mod report;
pub mod runner;
pub mod verify;

pub use config::{Experiment, ExperimentFile, Preset};

use thiserror::Error;

/// Command failure, carrying its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration file or arguments.
    #[error("{0}")]
    Usage(String),
    /// Output directory or file write failure.
    #[error("{0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Output(_) => 3,
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
