use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("out of range: {0}")]
    Range(String),

    #[error("duplicate cell for country {country} in period {period}; pre-sum counts before building a panel")]
    Aggregation { country: String, period: i64 },

    #[error("only {retained} donor countries available, at least {required} required")]
    InsufficientDonors { retained: usize, required: usize },

    #[error("data error: {0}")]
    Data(String),

    #[error("{path}:{line}: {message}")]
    Schema { path: PathBuf, line: u64, message: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("degenerate inference: {0}")]
    DegenerateInference(String),

    #[error("empty platform: P(w >= {threshold}) is numerically zero")]
    EmptyPlatform { threshold: f64 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::DegenerateInference(_) | Error::InsufficientDonors { .. } => 3,
            Error::Io(_) => 1,
            _ => 2,
        }
    }
}
