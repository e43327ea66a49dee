use chrono::NaiveDate;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("parse error at row {row}: {message}")]
    Parse { row: usize, message: String },

    #[error("no bars in window ending {end_date} (lookback {lookback_days} days)")]
    EmptyWindow {
        end_date: NaiveDate,
        lookback_days: u32,
    },

    #[error("window of {requested} days exceeds available history ({available} days, {bars} bars)")]
    ShortWindow {
        requested: u32,
        available: u32,
        bars: usize,
    },

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("claim extraction failed for report {report_id}: {message}")]
    Extraction { report_id: usize, message: String },

    #[error("orchestration error: {0}")]
    Orchestration(String),

    #[error("trader output rejected: {0}")]
    Decision(String),

    #[error("provider `{provider}` failed: {message}")]
    Provider { provider: String, message: String },

    #[error("memory ordering error: record dated {date} does not follow {last}")]
    Ordering { date: NaiveDate, last: NaiveDate },

    #[error("leakage protocol error: {0}")]
    Leakage(String),

    #[error("memory bank is empty")]
    EmptyBank,

    #[error("shape error: {0}")]
    Shape(String),

    #[error("config error at `{field}`: {message}")]
    Config { field: String, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable snake_case name used in service error bodies.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Ingestion(_) => "ingestion",
            Error::Parse { .. } => "parse",
            Error::EmptyWindow { .. } => "empty_window",
            Error::ShortWindow { .. } => "short_window",
            Error::Precondition(_) => "precondition",
            Error::Extraction { .. } => "extraction",
            Error::Orchestration(_) => "orchestration",
            Error::Decision(_) => "decision",
            Error::Provider { .. } => "provider",
            Error::Ordering { .. } => "ordering",
            Error::Leakage(_) => "leakage",
            Error::EmptyBank => "empty_bank",
            Error::Shape(_) => "shape",
            Error::Config { .. } => "config",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// Whether the caller's input caused the failure (as opposed to an
    /// upstream provider or the local machine).
    pub fn is_input_error(&self) -> bool {
        !matches!(
            self,
            Error::Orchestration(_) | Error::Decision(_) | Error::Provider { .. } | Error::Io(_)
        )
    }
}
