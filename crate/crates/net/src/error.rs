use std::io;

use thiserror::Error;

use crate::wire::{ErrorCode, WireError};

pub type Result<T> = std::result::Result<T, NetError>;

#[derive(Debug, Error)]
pub enum NetError {
    #[error("timed out waiting for {0}")]
    Timeout(String),
    #[error("i/o: {0}")]
    Io(io::Error),
    #[error(transparent)]
    Wire(WireError),
    #[error("peer reported {code:?}: {message}")]
    Remote { code: ErrorCode, message: String },
    #[error("protocol violation ({code:?}): {detail}")]
    Protocol { code: ErrorCode, detail: String },
    #[error(transparent)]
    Core(#[from] dipe_core::Error),
}

impl NetError {
    pub fn protocol(code: ErrorCode, detail: impl Into<String>) -> Self {
        NetError::Protocol { code, detail: detail.into() }
    }

    /// Error code carried by a local or remote protocol failure.
    pub fn code(&self) -> Option<ErrorCode> {
        match self {
            NetError::Remote { code, .. } | NetError::Protocol { code, .. } => Some(*code),
            _ => None,
        }
    }
}

fn is_timeout(e: &io::Error) -> bool {
    matches!(e.kind(), io::ErrorKind::WouldBlock | io::ErrorKind::TimedOut)
}

impl From<io::Error> for NetError {
    fn from(e: io::Error) -> Self {
        if is_timeout(&e) {
            NetError::Timeout(e.to_string())
        } else {
            NetError::Io(e)
        }
    }
}

impl From<WireError> for NetError {
    fn from(e: WireError) -> Self {
        match e {
            WireError::Io(io) => io.into(),
            other => NetError::Wire(other),
        }
    }
}
