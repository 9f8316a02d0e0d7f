use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },
    #[error("unsupported partial Fourier factor {0} (must satisfy 1/2 < pff <= 1)")]
    UnsupportedFactor(String),
    #[error("sampling masks differ within a repetition set")]
    MaskMismatch,
    #[error("degenerate symmetric band: {0} line(s), need at least 2")]
    DegenerateBand(usize),
    #[error("negative data-consistency weight {0}")]
    NegativeLambda(f64),
    #[error("empty repetition set")]
    EmptySet,
    #[error("format error: {0}")]
    Format(String),
    #[error("truncated payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: u64, actual: u64 },
    #[error("unsupported dataset version {0}")]
    Version(u16),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
