use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Core(#[from] pfrecon_core::Error),
    #[error(transparent)]
    Net(#[from] pfrecon_net::Error),
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Checkpoint(String),
    #[error("{0}")]
    Output(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Short machine-readable category.
    pub fn kind(&self) -> &'static str {
        match self {
            Self::Core(pfrecon_core::Error::Io(_)) | Self::Net(pfrecon_net::Error::Io(_)) | Self::Io(_) => "io",
            Self::Core(pfrecon_core::Error::Format(_) | pfrecon_core::Error::Truncated { .. } | pfrecon_core::Error::Version(_)) => "format",
            Self::Core(_) => "invalid_input",
            Self::Net(pfrecon_net::Error::Checkpoint(_) | pfrecon_net::Error::ParamMismatch(_)) | Self::Checkpoint(_) => "checkpoint",
            Self::Net(pfrecon_net::Error::Config(_)) => "config",
            Self::Net(pfrecon_net::Error::NonFinite(_)) => "non_finite",
            Self::Net(_) => "model",
            Self::Usage(_) => "usage",
            Self::Output(_) => "output",
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
