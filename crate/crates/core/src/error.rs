use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),
    #[error("no convergence after {iters} iterations (residual {residual:e})")]
    NoConvergence { iters: usize, residual: f64 },
    #[error("grid too coarse: {0}")]
    GridTooCoarse(String),
    #[error("invalid parameter `{key}`: {msg}")]
    Invalid { key: String, msg: String },
    #[error("degenerate fit: {0}")]
    DegenerateFit(String),
    #[error("polynomial division is not exact (remainder {0:e})")]
    InexactDivision(f64),
    #[error("quadrature tolerance not met (estimate {estimate}, error {error:e})")]
    Tolerance { estimate: f64, error: f64 },
    #[error("ill-conditioned configuration: {0}")]
    Conditioning(String),
    #[error("{0}")]
    Diagnostic(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(key: &str, msg: impl Into<String>) -> Error {
    Error::Invalid {
        key: key.to_string(),
        msg: msg.into(),
    }
}
