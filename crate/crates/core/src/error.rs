use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch for {what}: expected {expected}, found {found}")]
    Shape {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("label {label} is not a class index below {classes}")]
    InvalidLabel { label: f64, classes: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{what} did not converge after {iterations} iterations (residual {residual:e})")]
    Convergence {
        what: &'static str,
        iterations: usize,
        residual: f64,
    },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("index {index} out of range for length {len}")]
    InvalidIndex { index: usize, len: usize },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("conflict: {0}")]
    Conflict(&'static str),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("invalid permutation: {0}")]
    Permutation(String),

    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Errors caused by bad numbers rather than bad input.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NonFinite(_) | Error::Convergence { .. })
    }
}
