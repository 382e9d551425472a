use std::path::PathBuf;

/// Errors raised anywhere in the testing pipeline.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("index k={k} out of range for level J={level} (expected k < 2^J)")]
    IndexOutOfRange { level: u32, k: u64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("quadrature budget too small: need at least {needed} points, got {got}")]
    QuadratureBudget { needed: usize, got: usize },

    #[error("sample too small: need n >= {min}, got {n}")]
    SampleTooSmall { n: usize, min: usize },

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("noise bound violated: |y - f(x)| = {deviation} exceeds M = {bound}")]
    NoiseBound { deviation: f64, bound: f64 },

    #[error("zero signal variance")]
    ZeroSignalVariance,

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("calibration mismatch: {0}")]
    CalibrationMismatch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("CSV error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
