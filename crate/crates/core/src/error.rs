use alloc::string::String;

/// Everything that can go wrong inside the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {left:?} vs {right:?}")]
    DimensionMismatch {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("matrix side {side} exceeds the configured cap of {cap}")]
    DimensionCap { side: usize, cap: usize },
    #[error("vector of length {len} cannot be reshaped to {rows}x{cols}")]
    LengthMismatch { len: usize, rows: usize, cols: usize },
    #[error("non-finite value encountered in {0}")]
    NonFinite(&'static str),
    #[error("matrix has no nonzero singular value")]
    NoNonzeroSingularValue,
    #[error("matrix is not symmetric (max asymmetry {0:e})")]
    NotSymmetric(f64),
    #[error("matrix is singular")]
    Singular,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("data generation failed after {retries} retries: {reason}")]
    RetriesExhausted { retries: usize, reason: String },
    #[error("data violates the standing assumptions: {0}")]
    InvalidData(String),
    #[error("point is not a zero-loss global minimizer (loss {loss:e})")]
    NotAMinimizer { loss: f64 },
    #[error("preactivation {value:e} lies within {tol:e} of the activation kink")]
    KinkProximity { value: f64, tol: f64 },
    #[error("full-rank factorization unavailable: W_{unit} - I is rank deficient")]
    FactorizationUnavailable { unit: usize },
    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
