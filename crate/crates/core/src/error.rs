use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// Invalid trajectory, parameters or dimensions.
    #[error("configuration error: {0}")]
    Config(String),
    /// The QP or linear solve could not produce a usable result.
    #[error("solver error: {0}")]
    Solver(String),
    /// A NaN or infinity reached an operation that rejects it.
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn config_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Config(msg.into()))
}
