use thiserror::Error;

use crate::grid::CellIndex;

#[derive(Debug, Error)]
pub enum Error {
    /// Two particles were found in the same velocity cell.
    #[error("inadmissible configuration: particles {first} and {second} share cell {cell:?}")]
    Admissibility {
        cell: CellIndex,
        first: usize,
        second: usize,
    },

    #[error("configuration error: {0}")]
    Config(String),

    /// The exclusion constraint left no room for the requested configuration.
    #[error("saturation: {0}")]
    Saturation(String),

    #[error("numerical error{}: {message}", step.map(|s| format!(" at step {s}")).unwrap_or_default())]
    Numerical {
        step: Option<usize>,
        message: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical {
            step: None,
            message: msg.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
