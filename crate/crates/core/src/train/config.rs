//! Run configuration.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::branch::BranchKind;
use crate::data::{ClassWeights, DatasetKind, TargetKind, DEFAULT_ROTATION_SEED};
use crate::error::{BvaeError, Result};
use crate::nn::AdamConfig;
use crate::vae::{OutputActivation, ReconMode, VaeArch};

/// Reconstruction target of the decoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    /// Reconstruct the input itself.
    #[serde(rename = "self")]
    Input,
    /// Map every input to a fixed image of its class.
    Fixed(TargetKind),
}

/// All hyperparameters of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub alpha: f64,
    pub lambda: f64,
    pub branch: Option<BranchKind>,
    pub target_mode: TargetMode,
    pub latent_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub class_weights: ClassWeights,
    pub recon_mode: ReconMode,
    pub dataset: DatasetKind,
    /// Train on the first `n` training samples only.
    pub train_samples: Option<usize>,
    pub rotation_seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            alpha: 1.0,
            lambda: 0.0,
            branch: None,
            target_mode: TargetMode::Input,
            latent_dim: 2,
            epochs: 30,
            batch_size: 512,
            seed: 0,
            class_weights: ClassWeights::default(),
            recon_mode: ReconMode::Bce,
            dataset: DatasetKind::Mnist,
            train_samples: None,
            rotation_seed: DEFAULT_ROTATION_SEED,
            adam: AdamConfig::default(),
        }
    }
}

impl TrainConfig {
    /// Standard VAE.
    pub fn vae() -> Self {
        Self::default()
    }

    /// VAE with an MLP branch weighted by `lambda`.
    pub fn bvae(lambda: f64) -> Self {
        Self {
            lambda,
            branch: Some(BranchKind::Mlp),
            ..Self::default()
        }
    }

    /// Fixed-output VAE; synthetic targets switch to squared error.
    pub fn fixed(kind: TargetKind) -> Self {
        Self {
            target_mode: TargetMode::Fixed(kind),
            ..Self::default()
        }
        .normalized()
    }

    /// Applies the forced pairings: synthetic targets use squared error.
    pub fn normalized(mut self) -> Self {
        if let TargetMode::Fixed(kind) = self.target_mode {
            if kind.is_synthetic() {
                self.recon_mode = ReconMode::Mse;
            }
        }
        self
    }

    pub fn output_activation(&self) -> OutputActivation {
        match self.recon_mode {
            ReconMode::Bce => OutputActivation::Sigmoid,
            ReconMode::Mse => OutputActivation::Relu,
        }
    }

    pub fn arch(&self) -> VaeArch {
        VaeArch::mnist(self.latent_dim, self.output_activation())
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(BvaeError::Config(m));
        if !(self.alpha > 0.0 && self.alpha.is_finite()) {
            return bad(format!("alpha must be positive, got {}", self.alpha));
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad(format!("lambda must be non-negative, got {}", self.lambda));
        }
        if self.lambda > 0.0 && self.branch.is_none() {
            return bad("lambda > 0 needs a branch".into());
        }
        if self.latent_dim == 0 {
            return bad("latent_dim must be positive".into());
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if let Some(b) = &self.branch {
            b.validate(self.batch_size)?;
        }
        if self.train_samples == Some(0) {
            return bad("train_samples must be positive".into());
        }
        if let TargetMode::Fixed(kind) = self.target_mode {
            if kind.is_synthetic() && self.recon_mode != ReconMode::Mse {
                return bad(format!("{kind} targets require mse reconstruction"));
            }
        }
        self.class_weights.validate()
    }

    /// Hex SHA-256 prefix of the canonical JSON encoding.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(&Sha256::digest(&json)[..8])
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        let cfg = cfg.normalized();
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_targets_force_mse() {
        let c = TrainConfig::fixed(TargetKind::Gaussian);
        assert_eq!(c.recon_mode, ReconMode::Mse);
        assert_eq!(c.output_activation(), OutputActivation::Relu);
        let c = TrainConfig::fixed(TargetKind::Exemplar);
        assert_eq!(c.recon_mode, ReconMode::Bce);
    }

    #[test]
    fn json_round_trip_and_hash() {
        let c = TrainConfig::bvae(100.0);
        let text = serde_json::to_string(&c).unwrap();
        let back = TrainConfig::from_json(&text).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        assert_ne!(TrainConfig::bvae(10.0).hash(), c.hash());
    }

    #[test]
    fn invalid_configs() {
        assert!(TrainConfig { alpha: 0.0, ..TrainConfig::vae() }.validate().is_err());
        assert!(TrainConfig { lambda: 1.0, ..TrainConfig::vae() }.validate().is_err());
        let mut c = TrainConfig::bvae(10.0);
        c.branch = Some(BranchKind::ExactKnn { n: 512 });
        assert!(matches!(c.validate(), Err(BvaeError::Config(_))));
        assert!(TrainConfig::from_json("{\"alpha\": 0}").is_err());
        assert!(TrainConfig::from_json("{\"bogus\": 1}").is_err());
        assert_eq!(TrainConfig::from_json("{\"alpha\": 0.5}").unwrap().alpha, 0.5);
    }

    #[test]
    fn target_mode_json() {
        assert_eq!(serde_json::to_string(&TargetMode::Input).unwrap(), "\"self\"");
        assert_eq!(
            serde_json::to_string(&TargetMode::Fixed(TargetKind::Square)).unwrap(),
            "{\"fixed\":\"square\"}"
        );
    }
}
