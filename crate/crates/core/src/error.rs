use std::fmt;

use crate::lp::LpError;

/// A single well-formedness violation found in a witness certificate.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Violation {
    CNotPositive,
    DNotPositive,
    EpsilonOutOfRange,
    NonFinite(&'static str),
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::CNotPositive => f.write_str("c must be positive"),
            Violation::DNotPositive => f.write_str("d must be positive"),
            Violation::EpsilonOutOfRange => f.write_str("epsilon out of range"),
            Violation::NonFinite(field) => write!(f, "{field} must be finite"),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("no data")]
    NoData,

    #[error("conditional frequencies undefined: input x={0} never used")]
    UndefinedConditional(u8),

    #[error("frequency table not normalized (sum = {0})")]
    Unnormalized(f64),

    #[error("invalid certificate: {}", join(.0))]
    InvalidCertificate(Vec<Violation>),

    #[error("length mismatch for {what}: expected {expected}, got {got}")]
    LengthMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("bad magic bytes in round log")]
    BadMagic,

    #[error("unsupported round log version {0}")]
    UnsupportedVersion(u8),

    #[error("round log header truncated")]
    TruncatedHeader,

    #[error("truncated at round {0}")]
    Truncated(u64),

    #[error("round log digest mismatch: log declares {found}, configured device gives {expected}")]
    DigestMismatch { expected: String, found: String },

    #[error("not enough extractor seed bits: need {needed}, have {available}")]
    SeedExhausted { needed: usize, available: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Lp(#[from] LpError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

fn join(violations: &[Violation]) -> String {
    violations
        .iter()
        .map(ToString::to_string)
        .collect::<Vec<_>>()
        .join("; ")
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}
