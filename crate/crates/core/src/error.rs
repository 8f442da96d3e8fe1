use ldm_ctsim::CtError;
use ldm_manifold::ManifoldError;
use ldm_tensor::TensorError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum DnError {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("manifold step failed: {0}")]
    Manifold(#[from] ManifoldError),
    #[error(transparent)]
    Ct(#[from] CtError),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = DnError> = std::result::Result<T, E>;
