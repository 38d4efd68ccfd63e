//! Hybrid residual attention network (HRAN) for single-image super-resolution.
//!
//! The crate is organised bottom-up:
//!
//! * [`tensor`] holds the dense rank-4 tensor and the differentiable kernels,
//!   each paired with a hand-written vector-Jacobian product.
//! * [`model`] composes those kernels into spatial/channel attention, the
//!   hybrid residual attention block, residual groups, feature fusion and the
//!   full network, plus parameter storage and checkpoints.
//! * [`data`] covers image I/O, colour conversion, bicubic resampling and
//!   training patch sampling.
//! * [`train`] implements the L1 objective, Adam and the training loop.
//! * [`metrics`] implements Y-channel PSNR/SSIM and the geometric
//!   self-ensemble.
//!
//! Kernels run data-parallel through rayon when the `parallel` feature is
//! enabled (the default). Every output element is produced by exactly one task
//! with a fixed accumulation order, so results are bit-identical for any
//! worker count and with the feature disabled.

pub mod data;
mod error;
pub mod exec;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod train;

pub use error::{Error, Result};
pub use tensor::{Scalar, Tensor4};
