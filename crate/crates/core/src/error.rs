use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the tracking pipeline.
#[derive(Debug, Error)]
pub enum Error {
    /// A model object violated one of its invariants (e.g. a non-PD covariance).
    #[error("model error: {0}")]
    Model(String),
    /// A numerical routine could not proceed (e.g. singular innovation covariance).
    #[error("numerical error: {0}")]
    Numerical(String),
    /// Exhaustive enumeration refused because the problem is too large.
    #[error("refusing to enumerate a problem with {rows} rows and {measurements} measurements")]
    TooLarge { rows: usize, measurements: usize },
    #[error("{}:{line}: {message}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("configuration error: {0}")]
    Config(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
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
}
