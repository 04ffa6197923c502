use thiserror::Error;

/// Errors raised across the estimation pipeline.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// An argument lies outside the domain of the function.
    #[error("domain error: {0}")]
    Domain(String),

    /// A matrix that must be positive definite is not, within tolerance.
    #[error("matrix is not positive definite (smallest eigenvalue {min_eigenvalue:e}, tolerance {tolerance:e})")]
    Singular { min_eigenvalue: f64, tolerance: f64 },

    /// A parameter vector is outside the feasible region of a model.
    #[error("infeasible parameter: {0}")]
    Infeasible(String),

    /// The requested evaluation is not supported by the model.
    #[error("unsupported: {0}")]
    Unsupported(String),

    /// Invalid configuration (point sets, policies, sizes).
    #[error("configuration error: {0}")]
    Config(String),

    /// A runtime estimation failure (derivatives, weight matrices, providers).
    #[error("estimation error: {0}")]
    Estimation(String),

    /// The optimizer failed to converge from every starting point.
    #[error("optimizer did not converge after {restarts} restarts (best objective {best:e})")]
    NoConvergence { restarts: usize, best: f64 },

    /// Parse failure in a text input, with a 1-based location.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn domain<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Domain(msg.into()))
}
