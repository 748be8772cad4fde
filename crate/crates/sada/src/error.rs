//! Crate-wide error type.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("not enough history: need {needed}, have {have}")]
    NotEnoughHistory { needed: usize, have: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("nonuniform grid: spacing {observed} differs from {expected} beyond tolerance")]
    NonUniformGrid { expected: f64, observed: f64 },

    #[error("degenerate nodes: duplicate node time {0}")]
    DegenerateNodes(f64),

    #[error("cache underfull: interpolation requested with {0} nodes (need >= 2)")]
    CacheUnderfull(usize),

    #[error("time {0} outside the schedule domain [0, 1]")]
    TimeOutOfRange(f64),

    #[error("sigma singularity at t = {t}: sigma = {sigma}")]
    SigmaSingularity { t: f64, sigma: f64 },

    #[error("alpha-bar underflow at t = {t}: alpha_bar = {alpha_bar}")]
    AlphaBarUnderflow { t: f64, alpha_bar: f64 },

    #[error("degenerate density: all mixture responsibilities underflowed")]
    DegenerateDensity,

    #[error("degenerate norm: {0}")]
    DegenerateNorm(&'static str),

    #[error("insufficient samples: {got} < {needed}")]
    InsufficientSamples { needed: usize, got: usize },

    #[error("cache state: {0}")]
    CacheState(&'static str),

    #[error("non-finite value produced in {0}")]
    NonFinite(&'static str),

    #[error("history times must strictly decrease: pushed {pushed} after {newest}")]
    NonDecreasingTime { newest: f64, pushed: f64 },

    #[error("invalid configuration:\n{}", .0.join("\n"))]
    InvalidConfig(Vec<String>),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}
