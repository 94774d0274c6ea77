use thiserror::Error;

/// Failure modes shared by every analysis routine.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("invalid model: {0}")]
    InvalidModel(String),
    #[error("parameter outside domain: {0}")]
    DomainError(String),
    #[error("parameter combination is not estimable: {0}")]
    NotEstimable(String),
    #[error("invalid channel: {0}")]
    InvalidChannel(String),
    #[error("invalid scenario: {0}")]
    InvalidScenario(String),
    #[error("unsupported: {0}")]
    Unsupported(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
}

pub type Result<T> = std::result::Result<T, Error>;
