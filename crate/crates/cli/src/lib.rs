//! Library half of the `refqueue` command-line tool.
//!
//! The binary is a thin argument parser; everything it runs lives here so the
//! integration tests can drive the same code paths.

pub mod app;
pub mod commands;
pub mod output;
pub mod scenario_file;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Analysis(#[from] refqueue::Error),

    #[error("no arrival rate in the sweep meets the limits; nearest miss: {nearest_miss}")]
    Unsatisfiable { nearest_miss: String },
}

impl CliError {
    /// 0 success, 1 parse or validation, 2 unstable, 3 insufficient mass,
    /// 4 unsatisfiable dimensioning.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Analysis(refqueue::Error::Unstable { .. }) => 2,
            CliError::Analysis(refqueue::Error::InsufficientMass { .. })
            | CliError::Analysis(refqueue::Error::QuantilesUnavailable { .. }) => 3,
            CliError::Unsatisfiable { .. } => 4,
            _ => 1,
        }
    }
}
