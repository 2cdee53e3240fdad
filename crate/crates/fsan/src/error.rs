use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("duplicate observed index {0}")]
    DuplicateIndex(usize),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("degenerate band: f_L == f_H == {0}; widen by an explicit epsilon or use the full circle")]
    DegenerateBand(f64),

    #[error("matrix is not positive semidefinite within tolerance (lambda_min = {lambda_min:.3e}, lambda_max = {lambda_max:.3e})")]
    NotPsd { lambda_min: f64, lambda_max: f64 },

    #[error("rank {rank} is not below min_i N_i = {min_n}; decomposition hypothesis fails")]
    RankTooHigh { rank: usize, min_n: usize },

    #[error("decomposition not certified: reconstruction residual {residual:.3e} exceeds tolerance {tol:.3e}")]
    NotCertified { residual: f64, tol: f64 },

    #[error("zero reference vector in NMSE")]
    ZeroReference,

    #[error("numerical breakdown: {0}")]
    NumericalBreakdown(String),

    #[error("serialization: {0}")]
    Serialization(String),

    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serialization(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, Error>;
