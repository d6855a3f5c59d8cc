use thiserror::Error;

use crate::graph::Violation;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LabError {
    #[error("vertex {vertex} out of range for N={n}")]
    VertexOutOfRange { vertex: usize, n: usize },
    #[error("color {color} out of range for d={d}")]
    ColorOutOfRange { color: usize, d: usize },
    #[error("invalid graph: {0}")]
    InvalidGraph(Violation),
    #[error("invalid permutation: {0}")]
    InvalidPermutation(String),
    #[error("size mismatch: expected {expected}, got {got}")]
    SizeMismatch { expected: usize, got: usize },
    #[error("invalid parameters: {0}")]
    Params(String),
    #[error("instance too large: {0}")]
    TooLarge(String),
    #[error("malformed input: {0}")]
    Format(String),
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, LabError>;
