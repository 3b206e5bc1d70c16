//! Std companion to `lusbio-core`: on-disk formats, the cross-validation
//! harness, and the HTTP service behind the annotation tool. The `lusbio`
//! binary wraps all of it in a CLI.

pub mod formats;
pub mod harness;
pub mod server;
pub mod study;

use std::path::PathBuf;

pub use lusbio_core as core;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] lusbio_core::Error),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{}: {source}", path.display())]
    Json {
        path: PathBuf,
        source: serde_json::Error,
    },
    #[error("{}: {source}", path.display())]
    Csv { path: PathBuf, source: csv::Error },
    #[error("{}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },
    #[error("run {run}, stage {stage}: {source}")]
    Stage {
        run: usize,
        stage: &'static str,
        source: Box<Error>,
    },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("video ids differ; only in first: {only_first:?}; only in second: {only_second:?}")]
    IdMismatch {
        only_first: Vec<String>,
        only_second: Vec<String>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
