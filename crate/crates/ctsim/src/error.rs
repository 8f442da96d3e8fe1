use thiserror::Error;

#[derive(Debug, Error)]
pub enum CtError {
    #[error("invalid scan geometry: {0}")]
    Geometry(String),
    #[error("{what}: expected {expected:?}, got {got:?}")]
    Shape {
        what: &'static str,
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("invalid parameter: {0}")]
    Invalid(String),
    #[error("dataset format: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = CtError> = std::result::Result<T, E>;
