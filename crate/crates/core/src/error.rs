use thiserror::Error;

#[derive(Debug, Error)]
pub enum LabError {
    #[error("phase depth exhausted: {needed} bits needed, {available} available")]
    DepthExhausted { needed: usize, available: usize },

    #[error("x = {x} is outside the domain: {reason}")]
    Domain { x: f64, reason: &'static str },

    #[error("degenerate vector: |m u| = {magnitude:e}")]
    Degenerate { magnitude: f64 },

    #[error("matrix is (numerically) a rotation, norm = {norm}; polar factors are not unique")]
    RotationInput { norm: f64 },

    #[error("matrix is not unimodular: det = {det}")]
    NotUnimodular { det: f64 },

    #[error("depth {n} exceeds the limit {max}")]
    DepthLimit { n: usize, max: usize },

    #[error("grid level {level} is too coarse: need at least {required}")]
    GridTooCoarse { level: u32, required: u32 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T, E = LabError> = std::result::Result<T, E>;
