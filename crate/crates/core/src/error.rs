use std::path::PathBuf;

use thiserror::Error;

/// One problem found while reading a corpus directory.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadIssue {
    pub file: PathBuf,
    /// 1-based data row (header excluded); `None` for file-level problems.
    pub row: Option<usize>,
    pub message: String,
}

impl std::fmt::Display for LoadIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self.row {
            Some(row) => write!(f, "{} (row {}): {}", self.file.display(), row, self.message),
            None => write!(f, "{}: {}", self.file.display(), self.message),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("stale forward cache: {0}")]
    StaleCache(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("corpus load failed with {} issue(s):\n{}", .0.len(), format_issues(.0))]
    Load(Vec<LoadIssue>),

    #[error("training aborted: {0}")]
    Training(String),

    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<Error>,
    },

    #[error("mismatched result grids: {0}")]
    Mismatch(String),

    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

fn format_issues(issues: &[LoadIssue]) -> String {
    issues
        .iter()
        .map(|i| format!("  - {i}"))
        .collect::<Vec<_>>()
        .join("\n")
}

impl Error {
    pub fn with_context(self, context: impl Into<String>) -> Self {
        Error::Context {
            context: context.into(),
            source: Box::new(self),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
