use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("column `{0}` has no observed values to interpolate from")]
    UnfillableColumn(String),

    #[error("empty input: {0}")]
    EmptyInput(String),

    #[error("merge error: {0}")]
    Merge(String),

    #[error("need at least {required} rows to build one window, table has {available}")]
    WindowUnderflow { required: usize, available: usize },

    #[error("rank error: requested {requested} components but at most {max} are available")]
    Rank { requested: usize, max: usize },

    #[error("leakage: {0}")]
    Leakage(String),

    #[error("comparison error: {0}")]
    Comparison(String),

    #[error("format error in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("fetch error for {url}: {message}")]
    Fetch { url: String, message: String },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::Schema(_) => "schema",
            Error::Config(_) => "config",
            Error::Dimension(_) => "dimension",
            Error::Domain(_) => "domain",
            Error::UnfillableColumn(_) => "unfillable-column",
            Error::EmptyInput(_) => "empty-input",
            Error::Merge(_) => "merge",
            Error::WindowUnderflow { .. } => "window-underflow",
            Error::Rank { .. } => "rank",
            Error::Leakage(_) => "leakage",
            Error::Comparison(_) => "comparison",
            Error::Format { .. } => "format",
            Error::Fetch { .. } => "fetch",
            Error::Io { .. } => "io",
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            message: message.into(),
        }
    }
}
