use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid dimension {0}; dimensions must be at least 1")]
    InvalidDimension(usize),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("vector is not normalized (norm {norm})")]
    NotNormalized { norm: f64 },

    #[error("cannot normalize a zero vector")]
    ZeroVector,

    #[error("matrix is not Hermitian (max deviation {deviation:e})")]
    NotHermitian { deviation: f64 },

    #[error("operator norm {norm} exceeds 1")]
    OperatorNormTooLarge { norm: f64 },

    #[error("matrix is not unitary (Frobenius deviation {deviation:e})")]
    NotUnitary { deviation: f64 },

    #[error("matrix is not an orthogonal projector: {0}")]
    NotProjector(String),

    #[error("state does not lie in the subspace (residual {residual:e})")]
    OutsideSubspace { residual: f64 },

    #[error("subspace has rank 0")]
    EmptySubspace,

    #[error("block size {block} invalid for dimension {dim}")]
    InvalidBlock { dim: usize, block: usize },

    #[error("epsilon {0} out of range")]
    InvalidEpsilon(f64),

    #[error("truncation was built from a different observable")]
    MismatchedTruncation,

    #[error("block {block} too small: accuracy epsilon requires block >= c3*log2(d)/epsilon^2 = {required:.3}")]
    BlockTooSmall { block: usize, required: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}
