//! Dense tensors, reverse-mode differentiation and the Adam optimizer.

mod adam;
pub mod init;
pub mod kernels;
mod ops;
mod tape;
mod tensor;

pub use adam::AdamState;
pub use ops::{bce_loss, conv1d, deconv1d, linear, lstm_cell, mse_loss, LstmParams};
pub use tape::{bce_value, Gradients, LstmVars, Tape, Var, BCE_EPS};
pub use tensor::Tensor;
