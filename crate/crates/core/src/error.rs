use std::path::PathBuf;

/// Errors produced anywhere in the workbench.
#[derive(Debug, thiserror::Error)]
pub enum BvaeError {
    #[error("dimension error in {context}: {detail}")]
    Dimension { context: String, detail: String },

    #[error("config error: {0}")]
    Config(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("format error in {path}: {detail}")]
    Format { path: PathBuf, detail: String },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("missing data: {0}")]
    MissingData(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, BvaeError>;

impl BvaeError {
    pub(crate) fn dim(context: impl Into<String>, detail: impl Into<String>) -> Self {
        BvaeError::Dimension {
            context: context.into(),
            detail: detail.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        BvaeError::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code for the CLI. Config, data, and numeric failures
    /// get distinct codes.
    pub fn exit_code(&self) -> i32 {
        match self {
            BvaeError::Config(_) | BvaeError::Usage(_) | BvaeError::Json(_) => 2,
            BvaeError::MissingData(_)
            | BvaeError::Format { .. }
            | BvaeError::Consistency(_)
            | BvaeError::Io { .. }
            | BvaeError::Checkpoint(_) => 3,
            BvaeError::NonFinite(_) => 4,
            BvaeError::Dimension { .. } | BvaeError::Validation(_) => 5,
        }
    }
}
