use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("invalid constraint row {row}: {reason}")]
    InvalidConstraint { row: usize, reason: String },

    #[error("{r} constraints exceed the ambient dimension {d}")]
    TooManyConstraints { r: usize, d: usize },

    #[error("matrix is not positive definite (leading minor {minor} fails)")]
    NotPositiveDefinite { minor: usize },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("Polya-Gamma sampler exceeded {0} proposals")]
    IterationCap(u64),

    #[error("rejection sampler: max_tries exhausted after {tries} proposals")]
    MaxTriesExhausted { tries: u64 },

    #[error("quadrature error estimate {estimate:.3e} exceeds tolerance {tolerance:.1e}")]
    QuadratureNotConverged { estimate: f64, tolerance: f64 },

    #[error("empty input")]
    EmptyInput,

    #[error("series is constant; autocorrelation is undefined")]
    ConstantSeries,

    #[error("replicate {index}: {error}")]
    Replicate { index: u64, error: Box<Error> },

    #[error("config error at `{path}`: {message}")]
    Config { path: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn dim(what: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            what,
            expected,
            found,
        }
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::dim(what, expected, found))
    }
}
