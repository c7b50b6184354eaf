//! A small real-valued convolutional engine: periodic 2D convolutions with
//! ReLU or linear activation, a masked MSE loss, reverse-mode gradients through
//! a recorded tape, and Adam.
//!
//! Activations are kept channels-last internally (`positions x features`), so
//! every convolution is an im2col product with a contiguous row block per
//! position chunk. Chunks have a fixed size, so results do not depend on the
//! number of worker threads.

pub mod adam;
pub mod conv;
mod gemm;
pub mod loss;
pub mod network;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use conv::{conv2d_periodic, Activation, ConvLayer, ConvSpec};
pub use loss::{masked_mse_grad, masked_mse_loss};
pub use network::{Network, Tape};
pub use tensor::Tensor4;
