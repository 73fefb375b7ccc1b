//! Crate-wide error type.

use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("config error: {0}")]
    Config(String),

    #[error("model error: {0}")]
    Model(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}:{line}: malformed record: {msg}")]
    Schema { path: PathBuf, line: usize, msg: String },

    #[error("missing artifact: {0} (run the stage that produces it first)")]
    MissingArtifact(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("judge error: {0}")]
    Judge(String),

    #[error("evaluation error: {0}")]
    Eval(String),

    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
