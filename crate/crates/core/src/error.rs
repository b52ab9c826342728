use thiserror::Error;

/// Errors produced by mesh generation, assembly, factorization and time stepping.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("topology error: {0}")]
    Topology(String),

    #[error("point ({x}, {y}) is outside the mesh")]
    PointNotFound { x: f64, y: f64 },

    #[error("matrix is singular (zero pivot at index {pivot})")]
    Singular { pivot: usize },

    #[error("factorization failed: {0}")]
    Factorization(String),

    #[error("state error: {0}")]
    State(String),

    #[error("Newton iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NonConvergence { iterations: usize, residual: f64 },

    #[error("linear solve failed in Newton iteration {iteration}: {source}")]
    NewtonSolve {
        iteration: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("time step ending at t = {t} failed: {source}")]
    Step {
        t: f64,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidArgument(msg.into())
}
