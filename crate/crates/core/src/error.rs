use std::path::PathBuf;

/// Errors produced anywhere in the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("zero-norm embedding row {row} in {matrix}")]
    ZeroNorm { matrix: &'static str, row: usize },

    #[error("batch too small: {0}")]
    BatchTooSmall(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("{0} is not available before the first snapshot")]
    EmptyAverage(&'static str),

    #[error("schema version mismatch: expected {expected}, found {found}")]
    Schema { expected: u32, found: u32 },

    #[error("missing data: {0}")]
    Missing(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("config parse error: {0}")]
    Toml(String),
}

impl Error {
    /// Short stable identifier used in machine-readable error records.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Shape(_) => "shape",
            Error::ZeroNorm { .. } => "zero_norm",
            Error::BatchTooSmall(_) => "batch_too_small",
            Error::NonFinite(_) => "non_finite",
            Error::EmptyAverage(_) => "empty_average",
            Error::Schema { .. } => "schema",
            Error::Missing(_) => "missing",
            Error::Io { .. } => "io",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
            Error::Toml(_) => "toml",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
