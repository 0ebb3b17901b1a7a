use std::io;

use thiserror::Error;

/// Errors produced by the library.
///
/// Variants are grouped so that front ends can map them onto a small set of
/// exit categories (see [`IspError::category`]).
#[derive(Debug, Error)]
pub enum IspError {
    #[error("format error: {0}")]
    Format(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("no foreground pixels for person {person_id}")]
    EmptyForeground { person_id: u32 },

    #[error("training diverged at epoch {epoch}: loss {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

/// Coarse error category, used by the CLI for exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorCategory {
    Validation,
    Io,
    Numerical,
}

impl IspError {
    pub fn category(&self) -> ErrorCategory {
        match self {
            IspError::Io(_) => ErrorCategory::Io,
            IspError::Divergence { .. } => ErrorCategory::Numerical,
            _ => ErrorCategory::Validation,
        }
    }
}

pub type Result<T, E = IspError> = std::result::Result<T, E>;

macro_rules! validation {
    ($($arg:tt)*) => {
        $crate::error::IspError::Validation(format!($($arg)*))
    };
}
pub(crate) use validation;

macro_rules! format_err {
    ($($arg:tt)*) => {
        $crate::error::IspError::Format(format!($($arg)*))
    };
}
pub(crate) use format_err;
