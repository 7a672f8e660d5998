use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("eta must be positive and finite, got {0}")]
    InvalidEta(f64),

    #[error("invalid loss range [{a}, {b}]: endpoints must be finite with a <= b")]
    InvalidRange { a: f64, b: f64 },

    #[error("confidence level delta must lie in (0, 1], got {0}")]
    InvalidDelta(f64),

    #[error("sample size must be at least 1")]
    InvalidSampleSize,

    #[error("invalid loss distribution: {0}")]
    InvalidDistribution(String),

    #[error("invalid probability vector: {0}")]
    InvalidProbVector(String),

    #[error("empty input")]
    EmptyInput,

    #[error("invalid search interval [{lo}, {hi}]")]
    InvalidInterval { lo: f64, hi: f64 },

    #[error("degenerate loss range: width b - a is zero")]
    DegenerateRange,

    #[error("eta = {eta} lies outside the admissible range [{lo}, {hi}]")]
    EtaOutOfRange { eta: f64, lo: f64, hi: f64 },

    #[error("prior assigns zero mass to hypothesis {index}")]
    ZeroPriorMass { index: usize },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("index {index} out of range for {len} hypotheses")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("invalid eta grid: {0}")]
    InvalidGrid(String),

    #[error("every prior weight is zero")]
    AllMassZero,

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("unknown bound kind `{0}`")]
    UnknownBoundKind(String),

    #[error("bound kind `{0}` is not supported here")]
    UnsupportedBoundKind(&'static str),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
