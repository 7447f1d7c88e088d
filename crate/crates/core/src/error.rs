use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid domain input: {0}")]
    DomainInput(String),

    #[error("unknown environment `{0}`")]
    UnknownEnv(String),

    #[error("dimension mismatch: expected {expected}, got {got} ({context})")]
    Dimension {
        expected: usize,
        got: usize,
        context: &'static str,
    },

    #[error("malformed file at line {line}: {reason}")]
    Format { line: usize, reason: String },

    #[error("buffer too small: need at least {needed} transitions, have {have}")]
    BufferTooSmall { needed: usize, have: usize },

    #[error("ensemble member {index} out of range (ensemble size {size})")]
    MemberOutOfRange { index: usize, size: usize },

    #[error("operation not supported in {0} propagation mode")]
    UnsupportedMode(&'static str),

    #[error("every candidate produced non-finite rollouts")]
    AllCandidatesFlagged,

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing input artifact: {}", .0.display())]
    MissingArtifact(PathBuf),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn format(line: usize, reason: impl Into<String>) -> Self {
        Error::Format {
            line,
            reason: reason.into(),
        }
    }
}
