use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid dimensions: {0}")]
    InvalidDimensions(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// Malformed or truncated on-disk data.
    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("missing {direction} motion for frame {frame}")]
    MissingMotion {
        direction: &'static str,
        frame: usize,
    },

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        Error::Io {
            context: context.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }

    /// True for errors caused by malformed on-disk data, as opposed to bad
    /// arguments or missing inputs.
    pub fn is_data_format(&self) -> bool {
        matches!(self, Error::Format { .. } | Error::Json(_) | Error::Csv(_))
    }
}
