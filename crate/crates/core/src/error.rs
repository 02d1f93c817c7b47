use thiserror::Error;

/// Errors raised by fitting, estimation and I/O routines.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("positivity violation: {0}")]
    Positivity(String),

    #[error("rank-deficient weighted normal equations ({0})")]
    RankDeficient(String),

    #[error("no comparable pairs: {0}")]
    NoComparablePairs(String),

    #[error("invalid regime: {0}")]
    InvalidRegime(String),

    #[error("missing nuisance component: {0}")]
    MissingNuisance(&'static str),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("too many failed replicates: {failed} of {total} ({context})")]
    ReplicateFailures {
        failed: usize,
        total: usize,
        context: String,
    },

    #[error("undefined quantity: {0}")]
    Undefined(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Short machine-readable code, stable across releases.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidArgument(_) => "INVALID_ARGUMENT",
            Error::Data(_) => "DATA",
            Error::Positivity(_) => "POSITIVITY",
            Error::RankDeficient(_) => "RANK_DEFICIENT",
            Error::NoComparablePairs(_) => "NO_COMPARABLE_PAIRS",
            Error::InvalidRegime(_) => "INVALID_REGIME",
            Error::MissingNuisance(_) => "MISSING_NUISANCE",
            Error::Schema(_) => "SCHEMA",
            Error::ReplicateFailures { .. } => "REPLICATE_FAILURES",
            Error::Undefined(_) => "UNDEFINED",
            Error::Io(_) => "IO",
            Error::Csv(_) => "CSV",
            Error::Json(_) => "JSON",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
