use std::path::PathBuf;

use chrono::{NaiveDate, NaiveDateTime};
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    // ---- file parsing ----
    #[error("line {line}: {message}")]
    Malformed { line: u64, message: String },

    #[error("line {line}: expected header `{expected}`, found `{found}`")]
    Header {
        line: u64,
        expected: String,
        found: String,
    },

    #[error("line {line}: duplicate timestamp {timestamp}")]
    DuplicateTimestamp { line: u64, timestamp: NaiveDateTime },

    #[error("line {line}: timestamp {timestamp} is not after the previous row")]
    NonMonotone { line: u64, timestamp: NaiveDateTime },

    #[error("line {line}: negative {field} ({value})")]
    Negative {
        line: u64,
        field: &'static str,
        value: f64,
    },

    #[error("line {line}: timestamp {timestamp} is not on a 15-minute boundary")]
    Misaligned { line: u64, timestamp: NaiveDateTime },

    #[error("no fuel-mix coverage for load hour {0}")]
    MissingMixCoverage(NaiveDateTime),

    // ---- grids ----
    #[error("grid cell ({lat}, {lon}) is not on the temperature grid")]
    NotCoRegistered { lat: f64, lon: f64 },

    #[error("grid is inconsistent: {0}")]
    InvalidGrid(String),

    #[error("total population weight inside the region mask is zero")]
    ZeroWeight,

    #[error("no temperature data for {0}")]
    MissingDate(NaiveDate),

    #[error("region mask selects no cells")]
    EmptyMask,

    // ---- numerics ----
    #[error("cubic fit needs at least 4 distinct temperatures, got {0}")]
    RankDeficient(usize),

    #[error("cubic has no local minimum inside [{low}, {high}]")]
    NoInteriorMinimum { low: f64, high: f64 },

    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },

    #[error("abscissae are degenerate (zero spread)")]
    DegenerateAbscissae,

    #[error("{0}")]
    Window(String),

    #[error("ensemble member {member} year {year} covers {months} of 12 months")]
    IncompleteMemberYear { member: String, year: i32, months: usize },

    #[error("temperature path has no entry for year {0}")]
    YearOutsidePath(i32),

    #[error("no records fall inside {0}")]
    EmptyPeriod(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(&'static str),

    // ---- config / pipeline ----
    #[error("config key `{key}`: {message}")]
    Config { key: String, message: String },

    #[error("stage `{stage}` needs `{what}`")]
    MissingInput { stage: &'static str, what: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn malformed(line: u64, message: impl Into<String>) -> Self {
        Error::Malformed {
            line,
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(key: &str, message: impl Into<String>) -> Self {
        Error::Config {
            key: key.to_string(),
            message: message.into(),
        }
    }
}
