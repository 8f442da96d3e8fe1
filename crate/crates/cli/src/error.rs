use std::path::Path;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, config keys or values.
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Train(#[from] ldm_dn::DnError),
    #[error(transparent)]
    Ct(#[from] ldm_ctsim::CtError),
    #[error(transparent)]
    Manifold(#[from] ldm_manifold::ManifoldError),
    #[error(transparent)]
    Tensor(#[from] ldm_tensor::TensorError),
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.display().to_string(),
            source,
        }
    }

    /// 1 for usage errors, 2 for everything that fails at run time.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
