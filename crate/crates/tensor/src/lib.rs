//! Reverse-mode automatic differentiation over dense arrays: enough to build
//! small convolutional encoder/decoder networks, their losses and an Adam
//! optimizer.

mod conv;
mod error;
pub mod gradcheck;
pub mod io;
mod ops;
mod optim;
pub mod probe;
mod tensor;

pub use conv::{conv2d, conv_transpose2d};
pub use error::{Result, TensorError};
pub use ops::{frobenius_sq, l1_loss, mse_loss};
pub use optim::{AdamConfig, ParameterSnapshot, ParameterStore};
pub use tensor::{grad_enabled, no_grad, Tensor};
