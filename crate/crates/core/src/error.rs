use grad_tensor::TensorError;

#[derive(Debug, thiserror::Error)]
pub enum GradError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("config: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("numeric divergence: {0}")]
    Divergence(String),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

impl GradError {
    /// Process exit status for this failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            GradError::Config(_) => 2,
            GradError::Data(_) | GradError::Io(_) => 3,
            GradError::Divergence(_) => 4,
            GradError::Tensor(_) => 3,
        }
    }
}

pub type Result<T> = std::result::Result<T, GradError>;

pub(crate) fn data_err(msg: impl Into<String>) -> GradError {
    GradError::Data(msg.into())
}

pub(crate) fn config_err(msg: impl Into<String>) -> GradError {
    GradError::Config(msg.into())
}
