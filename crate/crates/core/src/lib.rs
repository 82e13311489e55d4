//! Lightweight deep joint source-channel coding for image transmission.
//!
//! A small convolutional autoencoder is trained through a differentiable
//! analog channel, slimmed by L1-regularised batch-norm scales and structured
//! channel pruning, and deployed over a digital quantize / M-QAM / Rayleigh
//! fading chain. A separate DCT + Hamming(7,4) + QAM pipeline serves as the
//! classical comparison point.

mod error;
pub mod baseline;
pub mod channel;
pub mod container;
pub mod dataset;
pub mod experiment;
pub mod metrics;
pub mod model;
pub mod pruning;
pub mod rng;
pub mod train;

pub use error::{CodecError, ContainerError, Error, Result};
