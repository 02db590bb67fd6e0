use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Format {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("unknown annotator `{0}`")]
    UnknownAnnotator(String),
    #[error("unknown sample `{0}`")]
    UnknownSample(String),
    #[error("no annotator has at least {min_labels} labels in every class")]
    EmptySplit { min_labels: usize },
    #[error("class {class} has {available} items, {required} required")]
    Capacity {
        class: usize,
        available: usize,
        required: usize,
    },
    #[error("samples without any annotation: {}", .0.join(", "))]
    Coverage(Vec<String>),
    #[error("sample `{0}` has no clean label")]
    MissingCleanLabel(String),
    #[error("annotator `{annotator}` has {available} labels in class {class}, {required} required")]
    TooFewLabels {
        annotator: String,
        class: usize,
        available: usize,
        required: usize,
    },
    #[error("training diverged: {0}")]
    Divergence(String),
    #[error("shape mismatch in {context}: expected {expected}, got {actual}")]
    Shape {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("label streams are misaligned: {0}")]
    Alignment(String),
    #[error("missing labels for: {}", .0.join(", "))]
    Incomplete(Vec<String>),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("policy: {0}")]
    Policy(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn format(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
