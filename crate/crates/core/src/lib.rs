//! Branched variational autoencoder (BVAE) workbench.
//!
//! A convolutional VAE whose objective carries an additional classifier
//! term over the latent codes:
//!
//! ```text
//! L = alpha * L_recon + L_KL + lambda * L_branch
//! ```
//!
//! The crate contains everything needed to train and evaluate such models
//! on MNIST without an external deep-learning framework: differentiable
//! layer kernels with explicit backward passes, IDX data loading and
//! augmentation, classifier branches (MLP, soft-kNN, class-mean surrogates
//! plus exact kNN and random forests), clustering metrics, a seeded and
//! resumable trainer, and experiment presets with exporters.

pub mod branch;
pub mod data;
pub mod error;
pub mod experiments;
pub mod metrics;
pub mod nn;
pub mod rng;
pub mod tensor;
pub mod train;
pub mod vae;

pub use error::{BvaeError, Result};
pub use tensor::{Scalar, Tensor};

/// Number of digit classes.
pub const NUM_CLASSES: usize = 10;
