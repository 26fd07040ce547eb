use thiserror::Error;

/// Errors raised by the assimilation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument violates a documented precondition.
    #[error("invalid input: {0}")]
    InvalidInput(String),
    /// A factorization or solve broke down.
    #[error("numerical failure: {0}")]
    Numerical(String),
    /// Every hyperparameter candidate was infeasible.
    #[error("optimization failed: {0}")]
    Optimization(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn numerical(msg: impl Into<String>) -> Self {
        Error::Numerical(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
