use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse { path: PathBuf, line: u64, message: String },

    #[error("subject {subject}: expected {expected} {what}, found {found}")]
    DimensionMismatch {
        subject: String,
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("insufficient local data at {query:?}; try larger bandwidths")]
    InsufficientLocalData { query: Vec<f64> },

    #[error("empty kernel neighborhood at z = {z:?}")]
    EmptyNeighborhood { z: Vec<f64> },

    #[error("singular system: {0}")]
    Singular(String),

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
