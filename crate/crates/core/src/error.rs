use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid {what}: {reason}")]
    Invalid { what: &'static str, reason: String },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("{path}:{line}: {reason}")]
    Parse {
        path: PathBuf,
        line: usize,
        reason: String,
    },

    #[error("feature dimension mismatch: model expects {expected}, got {found}")]
    DimMismatch { expected: u32, found: u32 },

    #[error(transparent)]
    Format(#[from] FormatError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl Error {
    pub(crate) fn invalid(what: &'static str, reason: impl Into<String>) -> Self {
        Error::Invalid {
            what,
            reason: reason.into(),
        }
    }
}

/// Failures while decoding a binary artifact (model or dictionary snapshot).
#[derive(Debug, Error, PartialEq, Eq)]
pub enum FormatError {
    #[error("not a {expected} file (bad magic)")]
    BadMagic { expected: &'static str },

    #[error("unsupported format version {found} (expected {expected})")]
    VersionMismatch { expected: u32, found: u32 },

    #[error("file truncated: need {expected} bytes, have {found}")]
    Truncated { expected: u64, found: u64 },

    #[error("checksum mismatch")]
    ChecksumMismatch,

    #[error("malformed payload: {0}")]
    Malformed(String),
}
