use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("matrix contains a non-finite entry at ({row}, {col})")]
    NonFiniteEntry { row: usize, col: usize },
    #[error("relative truncation is undefined for an all-zero matrix")]
    AllZeroMatrix,
    #[error("expected a square matrix, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("{0} did not converge")]
    ConvergenceFailure(&'static str),
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("invalid truncation rule: {0}")]
    BadTruncation(String),
    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),
    #[error("vertex `{0}` is not a state vertex")]
    NotAStateVertex(String),
    #[error("network has no state vertices")]
    EmptyNetwork,
    #[error("trajectory rows do not match topology: {0}")]
    RowRangeMismatch(String),
    #[error("invalid topology: {0}")]
    InvalidTopology(String),
    #[error("invalid system: {0}")]
    InvalidSystem(String),
    #[error("bad config: {0}")]
    BadConfig(String),
    #[error("malformed input: {0}")]
    Parse(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures that come from reading or writing files rather
    /// than from the content itself.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::Csv(e) => matches!(e.kind(), csv::ErrorKind::Io(_)),
            Error::Json(e) => e.is_io(),
            _ => false,
        }
    }
}
