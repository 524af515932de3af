use thiserror::Error;

/// Errors raised by the mirror flow library.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    /// A point lies outside the open domain; `constraint` is the first barrier with φ_i ≥ 0.
    #[error("point is infeasible: constraint {constraint} has barrier value {value}")]
    Infeasible { constraint: usize, value: f64 },

    #[error("domain has empty interior: {0}")]
    EmptyInterior(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("newton solve did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },

    #[error("numeric error: {0}")]
    Numeric(String),

    #[error("statistics error: {0}")]
    Statistics(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("integration error: trajectory {trajectory} became non-finite at step {step}")]
    Integration { trajectory: usize, step: usize },

    #[error("training aborted at step {step}: {reason}")]
    Training { step: usize, reason: String },

    #[error("row {row}: {source}")]
    Row {
        row: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("io error: {0}")]
    Io(String),
}

impl Error {
    pub(crate) fn at_row(self, row: usize) -> Self {
        Error::Row {
            row,
            source: Box::new(self),
        }
    }
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
