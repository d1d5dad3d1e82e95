use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter `{key}`: {reason}")]
    InvalidParam { key: &'static str, reason: String },

    #[error("closed-form solution requires q_max = -q_min (got q_min={q_min}, q_max={q_max})")]
    AsymmetricInventoryBounds { q_min: i64, q_max: i64 },

    #[error("matrix must be square and non-empty (got {rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("matrix or vector has a non-finite entry at index {index}")]
    NonFinite { index: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("time argument must be non-negative and finite (got {0})")]
    NegativeTime(f64),

    #[error("inventory {q} outside [{q_min}, {q_max}]")]
    InventoryOutOfRange { q: i64, q_min: i64, q_max: i64 },

    #[error("backward sweep produced a non-finite value at step {step} (t = {t})")]
    BlowUp { step: usize, t: f64 },

    #[error("strategy posted a {side} quote at inventory {q}, where that side is suppressed")]
    SuppressedSide { side: &'static str, q: i64 },

    #[error("invalid step: {0}")]
    InvalidStep(String),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("configuration has {} problem(s): {}", .0.len(), .0.join("; "))]
    Config(Vec<String>),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
