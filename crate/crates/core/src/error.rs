use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors produced anywhere in the library.
///
/// The variants map onto process exit codes in the CLI: usage and contract
/// problems are configuration errors, format and data problems are data
/// errors, invariant violations are internal errors.
#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("lookup error: unknown label {0:?}")]
    Lookup(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("pipeline error: {summary}")]
    Pipeline {
        summary: String,
        worker_status: Vec<WorkerStatus>,
    },

    #[error("invariant violated: {0}")]
    Invariant(String),
}

/// Outcome of one pipeline worker, reported when any worker fails.
#[derive(Debug, Clone, PartialEq)]
pub enum WorkerStatus {
    Ok { rank: usize, images: usize },
    Failed { rank: usize, message: String },
    Panicked { rank: usize },
}

impl std::fmt::Display for WorkerStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            WorkerStatus::Ok { rank, images } => write!(f, "worker {rank}: ok, {images} images"),
            WorkerStatus::Failed { rank, message } => write!(f, "worker {rank}: failed: {message}"),
            WorkerStatus::Panicked { rank } => write!(f, "worker {rank}: panicked"),
        }
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Contract(_) | Error::Lookup(_) => 2,
            Error::Io { .. } | Error::Format(_) | Error::Data(_) | Error::Numeric(_) => 3,
            Error::Pipeline { .. } => 3,
            Error::Invariant(_) => 4,
        }
    }
}
