//! Error types shared across the crate.

use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, DagError>;

#[derive(Debug, thiserror::Error)]
pub enum DagError {
    #[error("parse error in {path} at line {line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("structural error: {0}")]
    Structure(String),
    #[error("shape error: {0}")]
    Shape(String),
    #[error("degenerate point cloud: {0}")]
    DegenerateCloud(String),
    #[error("diffusion step {t} out of range (t_max = {t_max})")]
    Step { t: usize, t_max: usize },
    #[error("index out of range: {0}")]
    Index(String),
    #[error("pooling config error: {0}")]
    Pooling(String),
    #[error("size error: {0}")]
    Size(String),
    #[error("dataset error: {0}")]
    Dataset(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("unsupported variant: {0}")]
    UnsupportedVariant(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("numeric abort at step {step} (batch index {batch_index}): {msg}")]
    NumericAbort {
        step: usize,
        batch_index: usize,
        msg: String,
    },
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("image error: {0}")]
    Image(#[from] image::ImageError),
}

impl DagError {
    /// Process exit code for the CLI: 1 usage, 2 data, 3 checkpoint, 4 numeric abort.
    pub fn exit_code(&self) -> i32 {
        match self {
            DagError::Config(_) | DagError::UnsupportedVariant(_) => 1,
            DagError::Checkpoint(_) => 3,
            DagError::NumericAbort { .. } => 4,
            _ => 2,
        }
    }
}
