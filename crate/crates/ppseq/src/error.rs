use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("degenerate intensity: event on unit {neuron} at t={time} has zero rate")]
    ZeroIntensity { neuron: usize, time: f64 },

    #[error("mask is empty")]
    EmptyMask,

    #[error("degenerate truth labels: need at least one positive and one negative bin")]
    DegenerateTruth,

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("checkpoint format version mismatch: found {found}, expected {expected}")]
    CheckpointVersion { found: u32, expected: u32 },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
