use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Malformed model, state, or constraint data.
    #[error("invalid input: {0}")]
    Input(String),

    /// Configuration that can never produce a valid run.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Exhaustive enumeration requested beyond the hard size limit.
    #[error("refusing to enumerate {n} spins (limit is {limit})")]
    TooLarge { n: usize, limit: usize },

    #[error("logical node {node} has {degree} neighbors but its {copies} copies only offer {budget} slots under max degree {max_degree}")]
    DegreeCap {
        node: usize,
        degree: usize,
        copies: usize,
        budget: usize,
        max_degree: usize,
    },

    #[error("target distribution assigns zero probability to observed state {0}")]
    Support(u64),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("refusing to overwrite {0} (pass force to replace it)")]
    Exists(PathBuf),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
