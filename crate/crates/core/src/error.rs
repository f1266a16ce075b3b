use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("visibility undefined: all frames have zero total intensity")]
    UndefinedVisibility,

    #[error("invalid action id {0} (expected 0..{max})", max = crate::env::ACTION_COUNT)]
    InvalidAction(usize),

    #[error("episode already finished after {0} steps")]
    EpisodeDone(usize),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite loss {loss} at update {update} (max |Q| = {max_abs_q}, max |y| = {max_abs_target})")]
    NonFiniteLoss {
        update: usize,
        loss: f64,
        max_abs_q: f64,
        max_abs_target: f64,
    },

    #[error("checkpoint {path}: {reason}")]
    Checkpoint { path: PathBuf, reason: String },

    #[error("checkpoint {path} is incompatible: manifest hash {found}, expected {expected}")]
    IncompatibleCheckpoint {
        path: PathBuf,
        found: String,
        expected: String,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn checkpoint(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Checkpoint {
            path: path.into(),
            reason: reason.into(),
        }
    }
}
