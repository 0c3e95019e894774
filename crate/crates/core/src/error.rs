use thiserror::Error;

/// Errors raised by the toolkit.
///
/// Input-class errors (`DimensionMismatch`, `InvalidInput`, `Precondition`,
/// `Domain`, `SizeLimit`) are the caller's fault; the CLI maps them to exit
/// code 2.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("outside the formula's domain: {0}")]
    Domain(String),

    #[error("size limit exceeded: {0}")]
    SizeLimit(String),

    #[error("selection failed: {0}")]
    SelectionFailed(String),

    #[error("internal consistency check failed: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// True for errors caused by bad arguments rather than by a run going wrong.
    pub fn is_input(&self) -> bool {
        matches!(
            self,
            Error::DimensionMismatch { .. }
                | Error::InvalidInput(_)
                | Error::Precondition(_)
                | Error::Domain(_)
                | Error::SizeLimit(_)
                | Error::Json(_)
        )
    }
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidInput(msg.into())
}

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
