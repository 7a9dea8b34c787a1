use thiserror::Error;

/// Errors produced by the analysis and simulation routines.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    /// A parameter lies outside the domain where the model is defined.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// An iterative procedure (bisection, quadrature, asymptotic estimate)
    /// failed to reach its target.
    #[error("convergence failure: {0}")]
    Convergence(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}

pub(crate) fn convergence(msg: impl Into<String>) -> Error {
    Error::Convergence(msg.into())
}
