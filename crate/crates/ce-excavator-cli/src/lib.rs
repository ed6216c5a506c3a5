//! Experiment orchestration for the ce-excavator engine: configuration,
//! the orbit / exclude / verify / constants commands and their files.

pub mod commands;
pub mod config;
pub mod verify;

pub use commands::{cmd_constants, cmd_exclude, cmd_orbit, cmd_verify, OrbitReport, OrbitRow};
pub use config::RunConfig;
pub use verify::{history_suite, verify_summary, HistorySuite, VerifyCheck, VerifySummary};

use ce_excavator::Error;
use thiserror::Error as ThisError;

#[derive(Debug, ThisError)]
pub enum CliError {
    #[error("config error{}{}: {message}", field.as_ref().map(|f| format!(" in field `{f}`")).unwrap_or_default(), line.map(|(l, c)| format!(" at line {l} column {c}")).unwrap_or_default())]
    Config { field: Option<String>, line: Option<(usize, usize)>, message: String },
    #[error("{0}")]
    Engine(#[from] Error),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("verification failed: {0}")]
    Verify(String),
}

impl CliError {
    /// 0 success, 1 runtime, 2 config, 3 invariant violation.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config { .. } => 2,
            CliError::Io { .. } => 1,
            CliError::Verify(_) => 3,
            CliError::Engine(e) => match e.root() {
                Error::Constants(_) | Error::InvalidFamily(_) | Error::InvalidMap(_) | Error::ParamOutOfRange { .. } => 2,
                Error::Invariant(_) | Error::ScaleInversion { .. } | Error::NotCollectEckmann(_) => 3,
                _ => 1,
            },
        }
    }
}
