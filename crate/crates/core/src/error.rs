use alloc::string::String;
use core::fmt;

pub type Result<T> = core::result::Result<T, Error>;

/// Failures raised by core operations. Data-quality findings that are
/// reported rather than raised (see [`crate::validate_annotation`]) are not
/// errors.
#[derive(Debug, Clone, PartialEq)]
pub enum Error {
    InvalidInput(String),
    ShapeMismatch { expected: String, found: String },
    MissingLabel { record: String, label: &'static str },
    TooFewFrames { needed: usize, found: usize },
    Validation { record: String, reason: String },
    Degenerate(String),
}

impl Error {
    pub fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub fn shape(expected: impl fmt::Display, found: impl fmt::Display) -> Self {
        use alloc::string::ToString;
        Error::ShapeMismatch {
            expected: expected.to_string(),
            found: found.to_string(),
        }
    }
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::InvalidInput(msg) => write!(f, "invalid input: {msg}"),
            Error::ShapeMismatch { expected, found } => {
                write!(f, "shape mismatch: expected {expected}, found {found}")
            }
            Error::MissingLabel { record, label } => {
                write!(f, "record {record} has no {label} label")
            }
            Error::TooFewFrames { needed, found } => {
                write!(f, "video has {found} frames, at least {needed} required")
            }
            Error::Validation { record, reason } => write!(f, "record {record}: {reason}"),
            Error::Degenerate(msg) => write!(f, "degenerate input: {msg}"),
        }
    }
}

impl core::error::Error for Error {}
