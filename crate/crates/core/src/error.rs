use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty tensor")]
    EmptyTensor,

    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("bit width {0} outside [1, 16]")]
    BitsOutOfRange(u32),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate layer: every channel has a zero clipping range")]
    DegenerateLayer,

    #[error("no optimum in bracket [{lo}, {hi}]")]
    NoOptimumInBracket { lo: f64, hi: f64 },

    #[error("bad magic {0:?}")]
    BadMagic(String),

    #[error("malformed tensor header: {0}")]
    BadHeader(String),

    #[error("payload length mismatch: header implies {expected} bytes, found {found}")]
    PayloadLengthMismatch { expected: usize, found: usize },

    #[error("non-finite value at element {index}")]
    NonFinite { index: usize },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("report serialization failed: {0}")]
    Report(String),
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Stable numeric code used by the command-line front end.
    pub fn code(&self) -> i32 {
        match self {
            Error::Io { .. } | Error::Report(_) => 3,
            Error::BadMagic(_) | Error::BadHeader(_) | Error::PayloadLengthMismatch { .. } => 3,
            _ => 4,
        }
    }
}
