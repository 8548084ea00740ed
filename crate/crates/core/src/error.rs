use std::path::PathBuf;

/// Errors raised by ingestion, feature extraction, model fitting and evaluation.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    MalformedRow { line: u64, message: String },

    #[error("line {line}: value {value} in column `{column}` is outside [0, 65535]")]
    OutOfRange {
        line: u64,
        column: String,
        value: i64,
    },

    #[error("unknown behaviour label `{0}`")]
    UnknownLabel(String),

    #[error("length mismatch: {0}")]
    LengthMismatch(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("model file format version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("degenerate range: min {min} equals max {max}")]
    DegenerateRange { min: f64, max: f64 },

    #[error("zero total likelihood at tick {t}")]
    ZeroLikelihood { t: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("numerical failure: {0}")]
    Numeric(String),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the numerical routines (as opposed to bad input data).
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::Numeric(_) | Error::ZeroLikelihood { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
