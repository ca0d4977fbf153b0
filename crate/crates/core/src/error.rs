use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed row {row}: {message}")]
    MalformedRow { row: usize, message: String },

    #[error("non-positive price at row {row}")]
    NonPositivePrice { row: usize },

    #[error("duplicate date {date} at row {row}")]
    DuplicateDate { row: usize, date: chrono::NaiveDate },

    #[error("dates not strictly increasing at position {index}")]
    UnorderedDates { index: usize },

    #[error("series too short: need at least {needed}, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("return at position {index} is {value}, must exceed -1")]
    ReturnBelowMinusOne { index: usize, value: f64 },

    #[error("invalid parameter {name}: {message}")]
    InvalidParameter { name: &'static str, message: String },

    #[error("input misaligned: {0}")]
    Misaligned(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("serialization failed: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn param(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            message: message.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
