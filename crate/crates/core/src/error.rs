use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Input violated a documented precondition.
    #[error("rejected input: {0}")]
    RejectedInput(String),

    /// Alternating fit failed; carries the objective trace up to the failure.
    #[error("fit failed: {reason}")]
    Fit { reason: String, trace: Vec<f64> },
}

impl Error {
    pub(crate) fn rejected(msg: impl Into<String>) -> Self {
        Error::RejectedInput(msg.into())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
