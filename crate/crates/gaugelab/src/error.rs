use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum GaugeError {
    /// Input violates a documented precondition.
    #[error("validation: {0}")]
    Validation(String),
    /// A requested accuracy could not be met (step too large, horizon too short).
    #[error("accuracy: {0}")]
    Accuracy(String),
    /// Iterative solver stopped above its residual tolerance.
    #[error(
        "no convergence after {iterations} iterations, residual {residual:.3e} > tol {tol:.3e}"
    )]
    NonConvergence {
        iterations: usize,
        residual: f64,
        tol: f64,
    },
    /// Input is numerically degenerate (e.g. section projects to zero).
    #[error("degenerate input: {0}")]
    Degenerate(String),
    /// A numerical kernel (eigensolve, SVD) failed to converge.
    #[error("numerical: {0}")]
    Numerical(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, GaugeError>;

impl GaugeError {
    pub fn validation(msg: impl Into<String>) -> Self {
        GaugeError::Validation(msg.into())
    }
}
