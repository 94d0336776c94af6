use deltasketch::SketchError;
use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Sketch(#[from] SketchError),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid experiment spec: {0}")]
    InvalidSpec(String),

    #[error("report schema mismatch in {path}: {reason}")]
    Schema { path: String, reason: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("a trade-off table needs at least one report")]
    NoReports,

    #[error("worker pool: {0}")]
    Pool(String),
}

impl HarnessError {
    pub(crate) fn io(path: impl std::fmt::Display, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.to_string(),
            source,
        }
    }
}
