use thiserror::Error;

/// Errors raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("quadrature failure: {0}")]
    Quadrature(String),

    #[error("radius violation: source norm {norm} exceeds radius {radius}")]
    RadiusViolation { norm: f64, radius: f64 },

    #[error("unknown regularization method `{0}`")]
    UnknownMethod(String),

    #[error("qualification exceeded: smoothness {required} needs qualification the method does not offer (available {available})")]
    QualificationExceeded { required: f64, available: f64 },

    #[error("spectrum out of range: eigenvalues span [{min}, {max}], expected within [0, 1]")]
    SpectrumOutOfRange { min: f64, max: f64 },

    #[error("matrix is not symmetric (max deviation {max_deviation:e})")]
    Asymmetric { max_deviation: f64 },

    #[error("matrix is not positive semidefinite (min eigenvalue {min_eigenvalue:e})")]
    NotPsd { min_eigenvalue: f64 },

    #[error("eps = {eps} is too large: no admissible packing dimension")]
    EpsTooLarge { eps: f64 },

    #[error("truncation J = {truncation} too small: packing needs indices up to {needed}")]
    TruncationTooSmall { truncation: usize, needed: usize },

    #[error("codebook search exhausted after {tries} draws ({found} of {target} words)")]
    SearchExhausted {
        tries: usize,
        found: usize,
        target: usize,
    },

    #[error("precondition not met: {0}")]
    Precondition(String),

    #[error("internal consistency failure: {0}")]
    Consistency(String),

    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
