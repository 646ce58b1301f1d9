use thiserror::Error;

/// Errors raised across the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("scaling function is not positive: b({time}) = {value}")]
    NonPositiveScaling { time: f64, value: f64 },

    #[error("integration failed: {0}")]
    Integration(String),

    #[error("state is unphysical: {0}")]
    Unphysical(String),

    #[error("Fock truncation at dimension {dim} is insufficient (boundary weight {weight:e}); try dim >= {suggested}")]
    Truncation {
        dim: usize,
        weight: f64,
        suggested: usize,
    },

    #[error(
        "duration {duration} exceeds the bath recurrence guard {limit} (N = {n_modes}, cutoff = {cutoff})"
    )]
    Recurrence {
        duration: f64,
        limit: f64,
        n_modes: usize,
        cutoff: f64,
    },

    #[error("protocol design failed: {reason}")]
    Design { reason: String, trace: Vec<(f64, f64)> },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
