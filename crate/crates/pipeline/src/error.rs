use std::path::PathBuf;

use coopclass_core::Error as CoreError;

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("output directory is locked by another run: {}", .0.display())]
    Locked(PathBuf),
    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<PipelineError>,
    },
    #[error("missing dependency: {0}")]
    Dependency(String),
    #[error(transparent)]
    Core(#[from] CoreError),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("service error: {0}")]
    Service(String),
}

impl PipelineError {
    fn root(&self) -> &PipelineError {
        match self {
            PipelineError::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Process exit code: 2 configuration, 3 data or validation, 4 divergence,
    /// 5 lock or i/o, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            PipelineError::Config(_) | PipelineError::Core(CoreError::Config(_)) => 2,
            PipelineError::Core(CoreError::Divergence(_)) => 4,
            PipelineError::Locked(_) | PipelineError::Io(_) | PipelineError::Core(CoreError::Io(_)) => 5,
            PipelineError::Dependency(_) | PipelineError::Core(_) | PipelineError::Json(_) => 3,
            PipelineError::Stage { .. } | PipelineError::Service(_) => 1,
        }
    }
}
