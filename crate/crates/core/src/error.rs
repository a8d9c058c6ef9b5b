use thiserror::Error;

/// Errors produced by the numerical kernels, the meta-analytic estimators and
/// the dataset loaders.
#[derive(Debug, Error)]
pub enum Error {
    #[error("correlation {0} lies outside [-1, 1]")]
    CorrelationOutOfRange(f64),

    #[error("value is not finite: {0}")]
    NonFinite(f64),

    #[error("probability {0} must lie strictly between 0 and 1")]
    InvalidProbability(f64),

    #[error("degrees of freedom must be at least 1, got {0}")]
    InvalidDegreesOfFreedom(u64),

    #[error("sample size {n} is too small (need at least {min})")]
    SampleTooSmall { n: usize, min: usize },

    #[error("sequences have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("input sequence is constant; correlation is undefined")]
    ConstantInput,

    #[error("invalid quadrature: {0}")]
    InvalidQuadrature(String),

    #[error("invalid integration bounds: a = {a}, b = {b}")]
    InvalidBounds { a: f64, b: f64 },

    #[error("negative variance {0}")]
    NegativeVariance(f64),

    #[error("{method} needs at least {min} studies, got {k}")]
    TooFewStudies { method: &'static str, k: usize, min: usize },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("rejection sampler exhausted its budget of {0} attempts")]
    RejectionBudget(u64),

    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
