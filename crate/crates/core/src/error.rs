// SPDX-License-Identifier: MIT OR Apache-2.0

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("non-finite observation value {0}")]
    NonFinite(f64),

    #[error("observation {0} is outside the support of the observation model")]
    OutOfSupport(f64),

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("stream {0} is frozen")]
    FrozenStream(usize),

    #[error("observation provided for inactive stream {0}")]
    InactiveStream(usize),

    #[error("missing observation for active stream {0}")]
    MissingObservation(usize),

    #[error("stream index {index} out of range for {streams} streams")]
    UnknownStream { index: usize, streams: usize },

    #[error("threshold table exhausted at t={0}")]
    TableExhausted(u64),

    #[error("threshold table does not match this run: {0}")]
    TableMismatch(String),

    #[error("unsupported configuration: {0}")]
    Unsupported(String),

    #[error("detector is in the wrong phase: {0}")]
    Phase(&'static str),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error("corrupted checkpoint: {0}")]
    CheckpointCorrupt(String),

    #[error("checkpoint does not match this detector: {0}")]
    CheckpointMismatch(String),

    #[error("instance too large: {0}")]
    InstanceTooLarge(String),

    #[error("input vector is not sorted ascending")]
    Unsorted,

    #[error("malformed input: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
