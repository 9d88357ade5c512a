use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the core toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("non-finite input: {0}")]
    NonFinite(&'static str),
    #[error("degenerate profile")]
    DegenerateProfile,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("target exceeds grid")]
    TargetExceedsGrid,
    #[error("no target detected")]
    NoTargetDetected,
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("malformed header: {0}")]
    MalformedHeader(String),
    #[error("unsupported version {found} (expected {expected})")]
    UnsupportedVersion { found: u32, expected: u32 },
    #[error("truncated payload: expected {expected} bytes, found {found}")]
    TruncatedPayload { expected: u64, found: u64 },
    #[error("checksum mismatch: header {expected:08x}, payload {found:08x}")]
    ChecksumMismatch { expected: u32, found: u32 },
    #[error("split leakage: ship {0} appears in more than one split")]
    SplitLeakage(String),
    #[error("io error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
