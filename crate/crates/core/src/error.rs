use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Every failure the toolkit can report, grouped by category.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    #[error("degenerate input: {0}")]
    DegenerateInput(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("ingestion error: {0}")]
    Ingestion(String),

    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("solver error: {0}")]
    Solver(String),

    #[error("contract error: {0}")]
    Contract(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("configuration error: {0}")]
    Configuration(String),

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }

    /// Short category label, used by the command line for error reporting.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Shape(_) => "shape",
            Error::DegenerateInput(_) => "degenerate-input",
            Error::Parameter(_) => "parameter",
            Error::Ingestion(_) => "ingestion",
            Error::Format { .. } => "format",
            Error::Solver(_) => "solver",
            Error::Contract(_) => "contract",
            Error::Data(_) => "data",
            Error::Configuration(_) => "configuration",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }
}
