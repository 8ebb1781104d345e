use std::io;

use thiserror::Error;

pub type Result<T, E = TcnnError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum TcnnError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("validation failed: {0}")]
    Validation(String),

    #[error("parse error at byte {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("config error on line {line}: {message}")]
    Config { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] io::Error),
}

impl TcnnError {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        TcnnError::InvalidArgument(msg.into())
    }

    pub(crate) fn state(msg: impl Into<String>) -> Self {
        TcnnError::State(msg.into())
    }

    pub(crate) fn parse(offset: usize, msg: impl Into<String>) -> Self {
        TcnnError::Parse {
            offset,
            message: msg.into(),
        }
    }
}
