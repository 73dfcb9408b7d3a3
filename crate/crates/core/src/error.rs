use thiserror::Error;

/// Errors raised by kernel evaluation, inference and the PDE solvers.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid input: {0}")]
    Input(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(
        "cholesky factorization failed with jitter {jitter:e} (min eigenvalue estimate {min_eigenvalue:e})"
    )]
    Factorization { jitter: f64, min_eigenvalue: f64 },

    #[error("training failed: {0}")]
    Training(String),

    #[error("time step {step}: {source}")]
    TimeStep {
        step: usize,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn check_dim(expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { expected, got })
    }
}
