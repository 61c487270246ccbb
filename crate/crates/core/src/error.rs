//! Error type shared across the crate.
//!
//! Variants map onto the CLI exit-code classes: configuration and usage
//! problems exit with 1, anything wrong with data or files exits with 2,
//! and numeric failures during training exit with 3.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SctError {
    /// Malformed container: bad magic bytes or an unsupported version.
    #[error("format error: {0}")]
    Format(String),

    /// Structurally valid container whose contents contradict the declared
    /// layout (inconsistent dimensions, shape mismatches, stray bytes).
    #[error("schema error: {0}")]
    Schema(String),

    /// Well-formed data with invalid values (non-finite features, bad
    /// labels, broken invariants).
    #[error("data error: {0}")]
    Data(String),

    /// Invalid configuration (even kernel size, unsupported pooling,
    /// out-of-order thresholds, unknown config keys).
    #[error("config error: {0}")]
    Config(String),

    /// Invalid argument to an operation (empty block, mismatched lengths,
    /// duplicate coordinates).
    #[error("input error: {0}")]
    Input(String),

    /// Training produced a non-finite loss.
    #[error("divergence at step {step}: {message}")]
    Divergence { step: usize, message: String },

    /// A file failed its integrity check (CRC mismatch, truncation).
    #[error("corruption error: {0}")]
    Corrupt(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl SctError {
    /// Process exit code for the CLI: 1 usage/config, 2 data/file, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            SctError::Config(_) => 1,
            SctError::Format(_)
            | SctError::Schema(_)
            | SctError::Data(_)
            | SctError::Input(_)
            | SctError::Corrupt(_)
            | SctError::Io(_) => 2,
            SctError::Divergence { .. } => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, SctError>;
