//! Low-dimensional binary VSA classifiers.
//!
//! A binary VSA classifier encodes a sample of `N` discretized features as
//! `s = sgn(sum_i F_i * V(x_i))` and predicts `argmax_k C_k . s`. This crate
//! trains the feature vectors `F`, the class vectors `C` and the value mapping
//! `V` jointly as a two-layer binary network (straight-through estimators over
//! real-valued latent weights), optionally with batch normalization on the
//! encoding and knowledge distillation from a real-valued teacher, and then
//! exports a bit-packed model in which the normalization is folded into
//! per-dimension integer thresholds.
//!
//! Module map:
//!
//! - [`dataio`]: dataset loading, feature discretization, batching.
//! - [`nn`]: real-valued kernels (linear, normalizers, losses, Adam).
//! - [`model`]: the trainable binary model and its exact backward pass.
//! - [`qat`]: oscillation tracking and iterative weight freezing.
//! - [`teacher`]: MLP teacher, ensemble soft targets, logits files.
//! - [`trainer`]: the training loop, evaluation and gradient snapshots.
//! - [`deploy`]: threshold folding, packed inference, estimators, fault injection.

#![allow(clippy::needless_range_loop)]

pub mod dataio;
pub mod deploy;
pub mod error;
pub mod model;
pub mod nn;
pub mod qat;
pub mod teacher;
pub mod trainer;

pub use error::{LdcError, Result};
