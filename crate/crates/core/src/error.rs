use std::path::PathBuf;

use chrono::NaiveDate;
use thiserror::Error;

use crate::backend::BackendError;

fn fmt_before(date: &Option<NaiveDate>) -> String {
    date.map(|d| format!(" before {d}")).unwrap_or_default()
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("insufficient price history for {stock}{}: need {needed} trading days, found {found}", fmt_before(.date))]
    InsufficientHistory {
        stock: String,
        date: Option<NaiveDate>,
        needed: usize,
        found: usize,
    },

    #[error("cannot evaluate an empty set of predictions")]
    EmptyEvaluation,

    #[error("invalid domain value: {0}")]
    InvalidValue(String),

    #[error("stock registry line {line}: {message}")]
    RegistryFormat { line: usize, message: String },

    #[error("failed to read {path}: {message}")]
    Ingest { path: PathBuf, message: String },

    #[error("price row for {stock} on {date} is misaligned: {message}")]
    Alignment {
        stock: String,
        date: NaiveDate,
        message: String,
    },

    #[error("template error: {0}")]
    Template(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("no predictions for {ticker} in the requested date range")]
    EmptyTimeline { ticker: String },

    #[error(transparent)]
    Backend(#[from] BackendError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed JSON at {location}: {source}")]
    Json {
        location: String,
        #[source]
        source: serde_json::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
