//! D2Net: full-resolution image restoration with Fourier-domain global
//! attention, multi-scale depthwise convolution and adaptive skip fusion.
//!
//! Everything runs on a small dense [`Tensor`] type in `(N, C, H, W)` layout
//! over `f32` (training and inference) or `f64` (oracles and gradient checks).
//! Every layer has a hand-written backward pass; [`gradcheck`] certifies them
//! against central finite differences.
//!
//! Activation memory is tracked exactly: every tensor buffer registers its
//! element count with a per-thread counter, and [`memory::MemoryLedger`]
//! reports peak live elements inside a scope.

pub mod blocks;
pub mod config;
pub mod error;
pub mod eval;
pub mod gradcheck;
pub mod io;
pub mod memory;
pub mod network;
pub mod nn;
pub mod par;
pub mod scalar;
pub mod spectral;
pub mod tensor;
pub mod training;

pub use error::{Error, Result};
pub use scalar::{Precision, Scalar};
pub use tensor::{Shape, Tensor};
