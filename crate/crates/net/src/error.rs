use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] pfrecon_core::Error),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("parameters do not match the model: {0}")]
    ParamMismatch(String),
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("non-finite value: {0}")]
    NonFinite(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
