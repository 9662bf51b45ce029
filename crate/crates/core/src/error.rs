use std::path::PathBuf;

/// Errors surfaced by the engine.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("coordinate {coord:?} at index {index} lies outside [0,1)^3")]
    OutOfDomain { index: usize, coord: [f32; 3] },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("ingestion error for {path}: {reason}")]
    Ingestion { path: PathBuf, reason: String },

    #[error("model is corrupt: {0}")]
    ModelCorrupt(String),

    #[error("training diverged at step {step} (last finite loss at step {last_finite_step:?})")]
    Diverged {
        step: usize,
        last_finite_step: Option<usize>,
    },

    #[error("format error: {0}")]
    Format(String),

    #[error("level of detail {lod} exceeds max_lod {max_lod}")]
    LodOutOfRange { lod: u32, max_lod: u32 },

    #[error("dimension mismatch: {0}")]
    Dimensions(String),

    #[error("field failure: {0}")]
    Field(String),

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
