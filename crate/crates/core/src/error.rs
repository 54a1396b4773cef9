use std::path::PathBuf;

/// Errors produced by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read or write {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {msg}")]
    Parse { line: u64, msg: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// The data admits no answer (zero denominators, all-zero differences, ...).
    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("frequency grids differ: {left} vs {right} points")]
    GridMismatch { left: usize, right: usize },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    /// True for numerical degeneracies as opposed to bad data or I/O.
    pub fn is_degenerate(&self) -> bool {
        matches!(self, Error::Degenerate(_))
    }
}

pub type Result<T> = std::result::Result<T, Error>;
