use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Inputs violate a precondition (shape, finiteness, range).
    #[error("domain error: {0}")]
    Domain(String),

    /// A linear system could not be factored.
    #[error("numerical error: {0}")]
    Numerical(String),

    /// The block-descent objective stopped being finite.
    #[error("non-finite objective at outer iteration {iteration}")]
    NonFiniteObjective { iteration: usize },

    #[error("i/o error on {path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    pub(crate) fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }
}
