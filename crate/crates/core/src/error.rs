use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the pipeline.
///
/// The variants fall into three families that the CLI maps onto exit
/// codes: configuration problems, data/format problems and numeric failures.
#[derive(Debug, Error)]
pub enum Error {
    /// A shape or argument precondition of an operation was violated.
    #[error("contract violation in {op}: {detail}")]
    Contract { op: &'static str, detail: String },

    #[error("format error in {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("corrupt data in {path} at byte offset {offset}: {detail}")]
    Corrupt {
        path: PathBuf,
        offset: usize,
        detail: String,
    },

    #[error("no corpus files found in {0}")]
    EmptyCorpus(PathBuf),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("training diverged at epoch {epoch}, batch {batch} (loss {loss})")]
    Divergence { epoch: usize, batch: usize, loss: f64 },

    #[error("nothing to learn: {0}")]
    NothingToLearn(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    /// Process exit status: 1 configuration, 2 data or format, 3 numeric.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Contract { .. }
            | Error::Format { .. }
            | Error::Corrupt { .. }
            | Error::EmptyCorpus(_)
            | Error::NothingToLearn(_)
            | Error::Io { .. } => 2,
            Error::Numeric(_) | Error::Divergence { .. } => 3,
        }
    }

    pub(crate) fn contract(op: &'static str, detail: impl Into<String>) -> Self {
        Error::Contract {
            op,
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
