use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid code dimensions n={n}, k={k}: need 0 < k < n")]
    InvalidDimensions { n: usize, k: usize },

    #[error("density {0} outside [0, 1]")]
    InvalidDensity(f64),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("relaxed parity-check entry ({row}, {col}) = {value} is not allowed here")]
    InvalidRelaxedEntry { row: usize, col: usize, value: f64 },

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("update matrix flush requested but max |U| = {max} < T = {threshold}")]
    FlushBelowThreshold { max: u32, threshold: u32 },

    #[error("empty sample set: {0}")]
    Empty(&'static str),

    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn parse(location: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
