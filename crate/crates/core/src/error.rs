use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the placement pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad user-supplied parameter, vector length, index or design.
    #[error("invalid input: {0}")]
    Validation(String),

    /// A linear solve or factorization did not reach its tolerance.
    #[error("numerical failure in {context}: residual {residual:e}")]
    Numerical { context: String, residual: f64 },

    /// The request is outside what the desk-scale dense paths can do.
    #[error("capability exceeded: {0}")]
    Capability(String),

    /// An object was used before it was put into the required state.
    #[error("invalid state: {0}")]
    State(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing artifact {path}: run the `{stage}` stage first")]
    MissingArtifact { path: PathBuf, stage: &'static str },

    #[error("malformed file {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn validation(msg: impl Into<String>) -> Error {
    Error::Validation(msg.into())
}

pub(crate) fn check_len(what: &str, got: usize, expected: usize) -> Result<()> {
    if got != expected {
        return Err(validation(format!(
            "{what} has length {got}, expected {expected}"
        )));
    }
    Ok(())
}
