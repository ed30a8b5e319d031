//! Convolutional VAE: encoder/decoder, reparameterized sampling, and the
//! reconstruction and KL terms of the objective.

pub mod grid;
pub mod latent;
pub mod loss;
pub mod model;

pub use grid::{decoder_grid, grid_axis, grid_points};
pub use latent::{reparameterize, sample_epsilon, LatentBatch};
pub use loss::{
    kl_divergence, kl_per_sample, reconstruction_from_logits, reconstruction_loss,
    reconstruction_per_sample, total_loss, LossBreakdown, ReconMode,
};
pub use model::{clamp_log_var, join_heads, split_heads, OutputActivation, VaeArch, VaeModel, LOG_VAR_CLAMP};
