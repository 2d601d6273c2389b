use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A parameter violated its documented range or structure.
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    /// Array or layer shapes do not line up.
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    /// A dataset operation needed at least one sample.
    #[error("dataset is empty")]
    EmptyDataset,

    /// Training was aborted because the epoch loss became non-finite.
    #[error("training diverged at epoch {epoch}: loss is not finite")]
    TrainingDiverged { epoch: usize },

    /// Checkpoint file carries an unsupported format version.
    #[error("checkpoint version mismatch: found {found}, expected {expected}")]
    CheckpointVersion { found: u32, expected: u32 },

    /// Checkpoint header disagrees with the requested configuration.
    #[error("checkpoint shape mismatch: {0}")]
    CheckpointShape(String),

    /// Checkpoint file is truncated or structurally invalid.
    #[error("corrupt checkpoint: {0}")]
    CheckpointCorrupt(String),

    /// A sample or map file could not be parsed.
    #[error("malformed file {path}: {reason}")]
    MalformedFile { path: String, reason: String },

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}
