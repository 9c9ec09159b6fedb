use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("net {net} has no zero-overflow layer assignment")]
    Infeasible { net: usize },

    #[error("{0} nets would require {1} orderings; at most 8 nets are supported")]
    TooManyNets(usize, u64),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite gradient in layer {layer} during epoch {epoch}")]
    NonFiniteGradient { layer: usize, epoch: usize },

    #[error("problem generation failed after {0} attempts")]
    GenerationFailed(usize),

    #[error("invalid data: {0}")]
    Data(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
