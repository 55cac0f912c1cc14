//! Library surface of the rateopt command-line tool: config resolution and
//! the command implementations, kept separate from the binary so integration
//! tests can drive the exact code paths the executable uses.

pub mod commands;
pub mod config;

use thiserror::Error;

/// Errors mapped onto process exit codes: config errors exit 1, solver
/// failures exit 2. Verification failure is not an error (the result file is
/// still written) and exits 3 via [`commands::CmdOutcome`].
#[derive(Debug, Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("internal error: {0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Solver(_) | CliError::Internal(_) => 2,
        }
    }
}

pub use commands::{dispatch, CmdOutcome};
pub use config::{Command, FileConfig, Overrides, RunConfig};
