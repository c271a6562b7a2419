//! Error types shared across the pipeline stages.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CoreError {
    /// Invalid specification or configuration; lists every failing field.
    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    /// Caller violated an operation precondition.
    #[error("usage error: {0}")]
    Usage(String),

    /// Malformed input file.
    #[error("parse error in {path} at byte {offset} (line {line}, column {column}): {message}")]
    Parse {
        path: String,
        offset: usize,
        line: usize,
        column: usize,
        message: String,
    },

    /// Structurally valid file missing a required field.
    #[error("schema error in {path}: {message}")]
    Schema { path: String, message: String },

    /// PM rows that do not land on the expected sampling grid.
    #[error("cadence error: cell {cell} at {timestamp}: {message}")]
    Cadence {
        cell: String,
        timestamp: String,
        message: String,
    },

    /// PM rows out of order or duplicated.
    #[error("ordering error: cell {cell} at {timestamp}: {message}")]
    Ordering {
        cell: String,
        timestamp: String,
        message: String,
    },

    /// Non-finite or otherwise unusable numeric input.
    #[error("input error: {0}")]
    Input(String),

    /// A pipeline stage produced internally inconsistent state.
    #[error("internal consistency error: {0}")]
    Internal(String),

    /// Model training hit a non-finite loss.
    #[error("training diverged at epoch {epoch}, batch {batch} (lr {lr}): loss is not finite")]
    TrainDiverged { epoch: usize, batch: usize, lr: f64 },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CoreError {
    pub fn io(path: impl Into<String>, source: std::io::Error) -> Self {
        CoreError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, CoreError>;
