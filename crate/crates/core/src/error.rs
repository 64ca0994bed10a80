use thiserror::Error;

use crate::backends::BackendError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("no description with code length <= {capacity} nats")]
    NoFeasibleDescription { capacity: f64 },

    #[error("degenerate batch: {surviving} hypotheses survive ({dropped} dropped for non-finite scores), need at least 2")]
    DegenerateBatch { surviving: usize, dropped: usize },

    #[error(
        "c_max = {requested} nats exceeds both traced capacity ranges (max {available} nats); \
         extend the lambda grid or pass a smaller explicit c_max"
    )]
    CapacityOutOfRange { requested: f64, available: f64 },

    #[error("correlation undefined: {0}")]
    UndefinedCorrelation(&'static str),

    #[error("{failed} of {total} items failed, above the 10% failure budget")]
    FailureBudgetExceeded { failed: usize, total: usize },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
