use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    /// An argument falls outside the domain of an operation.
    #[error("domain error: {0}")]
    Domain(String),

    /// Every weight in one cluster vanished (or became NaN).
    #[error("weight degeneracy in cluster {cluster} at time {time}")]
    Degenerate { time: usize, cluster: usize },

    /// A precision matrix failed its Cholesky factorization.
    #[error("precision matrix is not positive definite: {0}")]
    Singular(String),

    /// Malformed input file. `row` and `col` are 1-based when present.
    #[error("{}: {message}{}", path.display(), location(*row, *col))]
    Load {
        path: PathBuf,
        row: Option<usize>,
        col: Option<usize>,
        message: String,
    },

    /// A run exceeded its wall-clock budget.
    #[error("time budget exhausted at time {time}")]
    Budget { time: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

fn location(row: Option<usize>, col: Option<usize>) -> String {
    match (row, col) {
        (Some(r), Some(c)) => format!(" (row {r}, column {c})"),
        (Some(r), None) => format!(" (row {r})"),
        _ => String::new(),
    }
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    /// Attach the time index to a step error.
    pub(crate) fn at_time(self, time: usize) -> Self {
        match self {
            Error::Degenerate { cluster, .. } => Error::Degenerate { time, cluster },
            Error::Domain(msg) => Error::Domain(format!("t={time}: {msg}")),
            Error::Singular(msg) => Error::Singular(format!("t={time}: {msg}")),
            Error::Budget { .. } => Error::Budget { time },
            other => other,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
