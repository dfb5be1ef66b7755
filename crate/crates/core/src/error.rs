use thiserror::Error;

/// Errors raised by configuration, problem assembly, solvers and experiments.
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in `{field}`: {detail}")]
    DimensionMismatch { field: &'static str, detail: String },

    #[error("parameter `{field}` must be strictly positive (got {value})")]
    NonPositiveParameter { field: &'static str, value: f64 },

    #[error("topology mismatch: expected {expected}, config says {actual}")]
    TopologyMismatch { expected: &'static str, actual: &'static str },

    #[error("constraint matrix {index} is not Hermitian positive semidefinite")]
    NonPsdConstraint { index: usize },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eig:e}, max {max_eig:e})")]
    NotPsd { min_eig: f64, max_eig: f64 },

    #[error("index {index} out of range (len {len})")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("domain error: {0}")]
    Domain(String),

    #[error("interior-point solver failed: {0}")]
    NumericalFailure(String),

    #[error("bisection bracket could not be formed: {0}")]
    Unbounded(String),

    #[error("degenerate randomization candidate: {0}")]
    DegenerateCandidate(String),

    #[error("unsupported modulation `{0}`")]
    UnsupportedModulation(String),

    #[error("invalid sweep specification: {0}")]
    InvalidSweep(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
