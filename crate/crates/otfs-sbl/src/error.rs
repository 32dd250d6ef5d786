use thiserror::Error;

/// Errors produced by grid construction, solvers, and the experiment harness.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("infeasible request: {0}")]
    Infeasible(String),

    #[error("pilot/guard layout does not fit the grid: {0}")]
    Layout(String),

    #[error("matrix is singular or not positive definite: {0}")]
    Singular(String),

    #[error("solver produced a non-finite state at iteration {iter}")]
    Diverged { iter: usize },

    #[error("true vector has zero norm; NMSE undefined")]
    ZeroTruth,

    #[error("config error: {0}")]
    Config(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
