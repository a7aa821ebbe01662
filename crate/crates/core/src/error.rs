use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabError {
    #[error("dimension mismatch: {what} (expected {expected}, got {got})")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("zero vector where a nonzero vector is required: {0}")]
    ZeroVector(&'static str),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("argument outside the domain: {0}")]
    Domain(String),

    /// theta(w, w*) is 0 or pi, where the true w-gradient does not exist.
    #[error("w-gradient undefined (non-differentiable point, theta = {theta})")]
    NonDifferentiable { theta: f64 },

    #[error("degenerate step: w collapsed to the zero vector at iteration {iter}")]
    DegenerateStep { iter: usize },
}

pub type Result<T> = std::result::Result<T, LabError>;
