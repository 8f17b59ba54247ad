use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("matrix is singular (pivot magnitude {pivot:e})")]
    SingularMatrix { pivot: f64 },

    #[error("SVD did not converge within {sweeps} sweeps")]
    NoConvergence { sweeps: usize },

    #[error("bad dimensions: {0}")]
    BadDimensions(String),

    #[error("degenerate singular spectrum (gap {gap:e})")]
    DegenerateSpectrum { gap: f64 },

    #[error("vector field returned a non-finite value")]
    NonFiniteField,

    #[error("non-finite metric-network loss at iteration {iter}")]
    NonFiniteLoss { iter: usize },

    #[error("parameter layout mismatch: {0}")]
    LayoutMismatch(String),

    #[error("replay buffer is empty")]
    EmptyBuffer,

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("checkpoint decode failed: {0}")]
    Checkpoint(String),
}

pub type Result<T> = std::result::Result<T, Error>;
