//! Cascade-decoder autoencoders for image reconstruction.
//!
//! The crate provides everything needed to train and evaluate the
//! cascade family of fully-connected autoencoders on 28x28 grayscale
//! images:
//!
//! - [`autodiff`] — a tape-based reverse-mode automatic differentiation
//!   engine over dense tensors,
//! - [`nn`] — encoder / decoder / discriminator compositions,
//! - [`objectives`] — the reconstruction, residual, adversarial,
//!   variational and Wasserstein training objectives,
//! - [`cascade`] — assembly of the twelve named architectures and the
//!   cascade forward pass,
//! - [`train`] — the serial sub-problem training loop with Adam,
//! - [`data`] — IDX dataset ingestion, normalization and batching,
//! - [`metrics`] — a windowed SSIM reference implementation and
//!   ΔSSIM reporting,
//! - [`gradcheck`] — finite-difference gradient verification used by
//!   the self-test suite.
//!
//! Everything is generic over the scalar type through [`real::Real`]
//! (`f32` or `f64`). Training is deterministic for a fixed seed.

pub mod autodiff;
pub mod cascade;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod nn;
pub mod objectives;
pub mod real;
pub mod rng;
pub mod sample;
pub mod train;

pub use error::{Error, Result};
pub use real::Real;
