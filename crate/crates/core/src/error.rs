use crate::kernel::KernelFamily;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("kernel family {0:?} does not provide derivative covariance blocks")]
    UnsupportedKernel(KernelFamily),

    /// Cholesky factorization failed even after jitter.
    #[error(
        "numerical failure in {context}: matrix of size {size} is not positive definite \
         (diagonal range {min_diag:.3e}..{max_diag:.3e}, jitter {jitter:.1e})"
    )]
    NumericalFailure {
        context: &'static str,
        size: usize,
        min_diag: f64,
        max_diag: f64,
        jitter: f64,
    },

    #[error("a suggestion is already pending")]
    PendingSuggestionExists,

    #[error("no suggestion is pending")]
    NoPendingSuggestion,

    #[error("told point does not match the pending suggestion")]
    PointMismatch,

    #[error("observed value must be finite, got {0}")]
    NonFiniteValue(f64),

    #[error("point lies outside the search bounds")]
    OutOfBounds,

    #[error("unsupported campaign schema version {found} (this build reads version {expected})")]
    SchemaVersion { found: u32, expected: u32 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Parse(e.to_string())
    }
}
