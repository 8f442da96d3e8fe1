use thiserror::Error;

#[derive(Debug, Error)]
pub enum ManifoldError {
    #[error("{what}: expected {expected}, got {got}")]
    Shape { what: String, expected: usize, got: usize },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("conjugate gradients did not converge in {iterations} iterations (worst column {column}, relative residual {residual:e})")]
    NotConverged {
        iterations: usize,
        column: usize,
        residual: f64,
    },
}

pub type Result<T, E = ManifoldError> = std::result::Result<T, E>;

pub(crate) fn shape(what: impl Into<String>, expected: usize, got: usize) -> ManifoldError {
    ManifoldError::Shape {
        what: what.into(),
        expected,
        got,
    }
}
