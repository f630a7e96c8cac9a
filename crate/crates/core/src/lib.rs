//! Full-waveform-inversion toolkit: acoustic forward modeling, synthetic
//! dataset generation and the Inversion-DeepONet network with its training
//! and evaluation loop.

pub mod datagen;
pub mod error;
pub mod model;
pub mod tensor;
pub mod train;
pub mod wavesim;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tape, Tensor, Var};
