use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("newick parse error at offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("malformed genealogy: {0}")]
    InvalidGenealogy(String),

    #[error("grid mismatch between data and trajectory")]
    GridMismatch,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("zero pivot at row {0}; matrix is not positive definite")]
    ZeroPivot(usize),

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("Newton iteration did not converge after {iterations} iterations (gradient norm {grad_norm:e})")]
    NoConvergence { iterations: usize, grad_norm: f64 },

    #[error("hyperparameter optimizer did not converge within {0} evaluations")]
    OptimizerNoConvergence(usize),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
