use thiserror::Error;

/// Errors raised by the simulator, detector and experiment harness.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    #[error("target speed {speed:.3e} m/s exceeds the Doppler model validity bound {bound:.3e} m/s")]
    ModelValidity { speed: f64, bound: f64 },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid configuration:\n  - {}", .0.join("\n  - "))]
    Validation(Vec<String>),

    #[error("SNR is undefined for an identically zero signal")]
    UndefinedSnr,

    #[error("noise covariance is singular or non-positive: {0}")]
    SingularCovariance(String),

    #[error("mode error: {0}")]
    Mode(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("zero vector where a non-zero one is required: {0}")]
    ZeroVector(&'static str),

    #[error("i/o error: {0}")]
    Io(String),
}

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
