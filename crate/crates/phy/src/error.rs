use thiserror::Error;

/// Errors produced by the baseband operations.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum PhyError {
    #[error("symbol value {symbol} out of range for N = {n}")]
    SymbolOutOfRange { symbol: usize, n: usize },

    #[error("invalid modem parameters: {0}")]
    InvalidParams(String),

    #[error("buffer length {got} does not match expected {expected}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("mixed spectrum lengths: {0} vs {1}")]
    MixedSpectrumLengths(usize, usize),

    #[error("time {t} s outside frame of duration {duration} s")]
    TimeOutOfFrame { t: f64, duration: f64 },

    #[error("requested span of {requested} samples exceeds the frame ({available} available)")]
    SpanExceedsFrame { requested: usize, available: usize },

    #[error("insufficient data for synchronization: need {needed} samples, got {got}")]
    InsufficientData { needed: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, PhyError>;
