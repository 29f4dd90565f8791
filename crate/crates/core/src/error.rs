use thiserror::Error;

/// Errors raised across the crate.
///
/// Variants split into validation problems (bad input, bad shapes, bad
/// files) and numeric failures; see [`Error::is_numeric`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("insufficient events: need {needed}, have {available} (short by {})", needed - available)]
    InsufficientEvents { needed: usize, available: usize },

    #[error("observation time {time} outside simulated horizon [0, {horizon}]")]
    OutsideHorizon { time: f64, horizon: f64 },

    #[error("ingestion error: {0}")]
    Ingest(String),

    #[error("numeric failure at interval {interval}: {msg}")]
    Numeric { interval: usize, msg: String },

    #[error("singular model at interval {interval}: {msg}")]
    Singular { interval: usize, msg: String },

    #[error("numeric failure: {0}")]
    NonFinite(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::Numeric { .. } | Error::Singular { .. } | Error::NonFinite(_)
        )
    }

    pub(crate) fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
