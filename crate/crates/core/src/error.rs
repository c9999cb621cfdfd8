use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("mesh error: {0}")]
    Mesh(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("singular system: zero pivot in column {column}")]
    Singular { column: usize },

    #[error("coefficient below admissible bound: min q = {q_min:.6e} < {bound:.6e}")]
    InadmissibleCoefficient { q_min: f64, bound: f64 },

    #[error("state solve did not converge after {iterations} Newton steps (residual {residual:.3e})")]
    StateSolve { iterations: usize, residual: f64 },

    #[error("regularization parameter search failed: {reason}")]
    BetaSearch { reason: String, history: Vec<(f64, f64)> },

    #[error("subproblem solver did not converge: {0}")]
    NonConvergence(String),

    #[error("constants violate the convergence conditions:\n{}", .0.join("\n"))]
    Constants(Vec<String>),

    #[error("{0}")]
    Range(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }
}
