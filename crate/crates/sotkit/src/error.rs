use thiserror::Error;

/// Fatal pipeline errors, one per exit status.
#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config: {0}")]
    Config(String),
    #[error("input: {0}")]
    Input(String),
    #[error("endpoint: {0}")]
    Endpoint(String),
    #[error("internal: {0}")]
    Internal(String),
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Input(_) => 2,
            PipelineError::Endpoint(_) => 3,
            PipelineError::Internal(_) => 4,
        }
    }
}
