use thiserror::Error;

use crate::objective::ObjectiveError;
use crate::supervision::AnnotationError;
use crate::tensor::TensorError;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("invalid annotation: {0}")]
    Annotation(#[from] AnnotationError),
    #[error(transparent)]
    Objective(#[from] ObjectiveError),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("training error: {0}")]
    Train(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
