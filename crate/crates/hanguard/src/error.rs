//! Crate-wide error type.
//!
//! Variants are grouped by how the CLI maps them to exit codes: I/O failures,
//! validation/protocol failures, and internal invariant breaches are distinct
//! classes so scripts can tell them apart.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {msg}")]
    Parse { path: PathBuf, line: usize, msg: String },

    /// A contract violation on inputs: bad thresholds, empty datasets,
    /// out-of-range labels, unknown codepoints, malformed checkpoints.
    #[error("invalid input: {0}")]
    Invalid(String),

    /// Network-level failure talking to a remote classifier (after retries).
    #[error("transport error: {0}")]
    Transport(String),

    /// The remote peer answered, but not per the wire protocol.
    #[error("protocol violation: {0}")]
    Protocol(String),

    /// A bug: something the library promises can never happen.
    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }

    pub fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse { path: path.into(), line, msg: msg.into() }
    }

    pub fn internal(msg: impl Into<String>) -> Self {
        Error::Internal(msg.into())
    }

    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
