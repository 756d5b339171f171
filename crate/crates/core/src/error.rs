use thiserror::Error;

use crate::solver::Trajectory;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },

    #[error("estimation error: {0}")]
    Estimation(String),

    /// The algebraic Jacobian is numerically singular, so the DAE reduction
    /// breaks down.
    #[error("singular Jacobian (det = {det:e}): {context}")]
    Singular { det: f64, context: String },

    #[error("Newton iteration did not converge in {iterations} iterations (best residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("matrix is not Hurwitz (max real eigenvalue part {max_real:e})")]
    NotHurwitz { max_real: f64 },

    #[error("matrix is not positive definite: {0}")]
    NotPositiveDefinite(String),

    #[error("non-finite value encountered: {0}")]
    NonFinite(String),

    #[error("simulation aborted at tau = {tau}: {source}")]
    Aborted {
        tau: f64,
        #[source]
        source: Box<Error>,
        partial: Box<Trajectory>,
    },

    #[error("{failed} of {total} ensemble paths failed (limit 5%)")]
    TooManyFailures { failed: usize, total: usize },

    #[error("validation failed:\n  {}", .0.join("\n  "))]
    Validation(Vec<String>),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Process exit code for the CLI: 1 for invalid input, 2 for numerical failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parameter(_)
            | Error::Domain(_)
            | Error::Dimension { .. }
            | Error::Validation(_)
            | Error::Parse { .. }
            | Error::Io(_)
            | Error::Csv(_)
            | Error::Json(_) => 1,
            _ => 2,
        }
    }

    pub fn is_singular(&self) -> bool {
        match self {
            Error::Singular { .. } => true,
            Error::Aborted { source, .. } => source.is_singular(),
            _ => false,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
