use std::path::PathBuf;

/// Errors produced by the simulation engines and the sweep runner.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    #[error("stiffness abort: non-finite state at step {step}")]
    Stiffness { step: u64 },

    #[error("time step too large: jump probability {probability:.3e} exceeds budget {budget:.3e} at step {step}")]
    JumpBudget {
        step: u64,
        probability: f64,
        budget: f64,
    },

    #[error("Hilbert space dimension {dim} exceeds the cap {cap}")]
    DimensionOverflow { dim: usize, cap: usize },

    #[error("phase undefined for {undefined} of {total} samples")]
    PhaseUndefined { undefined: usize, total: usize },

    #[error("not enough defined samples: have {have}, need {need}")]
    InsufficientSamples { have: usize, need: usize },

    #[error("config error: {0}")]
    Config(String),

    #[error("malformed data in {path}: {reason}")]
    Data { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Error {
    Error::InvalidParameter {
        field,
        reason: reason.into(),
    }
}
