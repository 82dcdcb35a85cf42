//! Library half of the `spconf` binary: experiment configuration, the
//! synthetic / real / trend runners, and SVG heatmap emission. The binary in
//! `main.rs` is a thin argument-parsing shell over these modules so that
//! integration tests can drive the same code paths directly.

use thiserror::Error;

pub mod config;
pub mod heatmap;
pub mod runner;

/// Top-level error, split by exit code: configuration problems exit 2, bad
/// input data exits 3, anything unexpected exits 1.
#[derive(Debug, Error)]
pub enum CliError {
    /// The manifest, flags, or referenced paths are wrong.
    #[error("{0}")]
    Config(String),
    /// The input data is malformed or insufficient.
    #[error("{0}")]
    Data(String),
    /// An internal failure that valid config and data should never trigger.
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Data(_) => 3,
            CliError::Internal(_) => 1,
        }
    }
}

/// Wraps a library error that validated config/data should have ruled out.
pub(crate) fn internal(context: &str, err: impl std::fmt::Display) -> CliError {
    CliError::Internal(format!("{context}: {err}"))
}
