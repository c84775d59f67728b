use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, GhiError>;

#[derive(Debug, Error)]
pub enum GhiError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("cannot decode image {path}: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("undefined metric: {0}")]
    UndefinedMetric(String),

    #[error("incompatible bundle: {0}")]
    Incompatible(String),

    #[error("checksum mismatch for {file}")]
    Checksum { file: String },

    #[error("corrupt payload {file}: {message}")]
    Corrupt { file: String, message: String },

    #[error("empty report: {0}")]
    EmptyReport(String),
}

impl GhiError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        GhiError::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable category, stable across releases.
    pub fn category(&self) -> &'static str {
        match self {
            GhiError::Io { .. } => "io",
            GhiError::Parse { .. } => "parse",
            GhiError::EmptyInput(_) => "empty_input",
            GhiError::Config(_) => "config",
            GhiError::Shape(_) => "shape",
            GhiError::Decode { .. } => "decode",
            GhiError::UndefinedMetric(_) => "undefined_metric",
            GhiError::Incompatible(_) => "incompatible",
            GhiError::Checksum { .. } => "checksum",
            GhiError::Corrupt { .. } => "corrupt",
            GhiError::EmptyReport(_) => "empty_report",
        }
    }

    /// Process exit code: 1 for system failures, 2 for validation and configuration failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            GhiError::Io { .. } => 1,
            _ => 2,
        }
    }
}
