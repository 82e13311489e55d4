//! Minimal dense tensor substrate with reverse-mode automatic differentiation.
//!
//! Values are row-major `f64`. A [`Tape`] is built fresh for every forward
//! pass; operations push nodes onto it and [`Tape::backward`] walks them in
//! reverse creation order. Only the operators an image autoencoder needs are
//! provided: strided convolution and its transpose, batch normalization,
//! ReLU, sigmoid, addition, scaling, mean squared error and an L1 sum.

mod batch_norm;
pub mod conv;
mod error;
#[cfg(any(test, feature = "gradcheck"))]
pub mod gradcheck;
mod ops;
mod optim;
mod tape;
mod tensor;

pub use batch_norm::{batch_norm, BatchNormState, BatchStats, BN_EPSILON, BN_MOMENTUM};
pub use conv::{conv2d, conv2d_transpose, ConvGeometry};
pub use error::{Result, TensorError};
pub use ops::{add, mse_loss, relu, reshape, scale, sigmoid, sum_abs};
pub use optim::{adam_step, Adam, AdamState, Optimizer, Sgd};
pub use tape::{Gradients, Tape, Var};
pub use tensor::Tensor;
