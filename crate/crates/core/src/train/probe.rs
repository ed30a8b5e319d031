//! Supervised probe: an MLP trained on frozen latent means.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::branch::{argmax_rows, BranchKind};
use crate::data::LabeledDataset;
use crate::error::{BvaeError, Result};
use crate::metrics::{accuracy, cluster_scores, confusion_matrix, KmeansConfig, MetricsReport};
use crate::nn::{one_hot, softmax_cross_entropy, AdamConfig, AdamState, Sequential};
use crate::rng;
use crate::tensor::Tensor;
use crate::NUM_CLASSES;

use super::trainer::Checkpoint;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub seed: u64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 256,
            adam: AdamConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeReport {
    pub accuracy: f64,
    pub predictions: Vec<u8>,
    pub confusion: [[u64; NUM_CLASSES]; NUM_CLASSES],
}

/// Trains the probe MLP (same widths as the MLP branch) on `codes`.
pub fn train_probe(codes: &Tensor<f32>, labels: &[u8], cfg: &ProbeConfig) -> Result<Sequential<f32>> {
    let n = codes.rows();
    if n == 0 || labels.len() != n {
        return Err(BvaeError::dim("probe", format!("{n} codes, {} labels", labels.len())));
    }
    if cfg.batch_size == 0 {
        return Err(BvaeError::Config("probe batch_size must be at least 1".into()));
    }
    let k = codes.row_len();
    let specs = BranchKind::Mlp.head_specs(k).expect("mlp has a head");
    let mut net = Sequential::new("probe", &[k], specs, &mut rng::stream(cfg.seed, "probe-init", 0))?;
    let shapes: Vec<Vec<usize>> = net.params().map(|p| p.shape().to_vec()).collect();
    let mut adam = AdamState::new(cfg.adam, &shapes);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng::stream(cfg.seed, "probe-shuffle", epoch as u64));
        for idx in order.chunks(cfg.batch_size) {
            let x = codes.gather_rows(idx);
            let y: Vec<u8> = idx.iter().map(|&i| labels[i]).collect();
            net.zero_grads();
            let logits = net.forward(x)?;
            let ones = vec![1.0f32; idx.len()];
            let (_, g) = softmax_cross_entropy(&logits, &one_hot(&y, NUM_CLASSES), &ones)?;
            net.backward(&g)?;
            net.clear_caches();
            adam.update(&mut net.param_refs())?;
        }
    }
    Ok(net)
}

/// Fits the probe on training means and scores it on test means.
pub fn probe_report(
    train_codes: &Tensor<f32>,
    train_labels: &[u8],
    test_codes: &Tensor<f32>,
    test_labels: &[u8],
    cfg: &ProbeConfig,
) -> Result<ProbeReport> {
    let net = train_probe(train_codes, train_labels, cfg)?;
    let logits = net.predict(test_codes)?;
    let predictions = argmax_rows(&logits.cast::<f64>());
    Ok(ProbeReport {
        accuracy: accuracy(test_labels, &predictions),
        confusion: confusion_matrix(test_labels, &predictions)?,
        predictions,
    })
}

/// Probe on a trained model's latent means.
pub fn evaluate_probe(ck: &Checkpoint, train: &LabeledDataset, test: &LabeledDataset, cfg: &ProbeConfig) -> Result<ProbeReport> {
    let ztr = ck.encode_means(&train.images)?;
    let zte = ck.encode_means(&test.images)?;
    probe_report(&ztr, &train.labels, &zte, &test.labels, cfg)
}

/// k-means scores on test means plus the probe.
pub fn evaluate(ck: &Checkpoint, train: &LabeledDataset, test: &LabeledDataset) -> Result<MetricsReport> {
    let ztr = ck.encode_means(&train.images)?;
    let zte = ck.encode_means(&test.images)?;
    let km = KmeansConfig {
        seed: rng::derive_seed(ck.config.seed, "kmeans", 0),
        ..KmeansConfig::default()
    };
    let scores = cluster_scores(&zte, &test.labels, &km)?;
    let probe = ProbeConfig {
        seed: ck.config.seed,
        ..ProbeConfig::default()
    };
    let pr = probe_report(&ztr, &train.labels, &zte, &test.labels, &probe)?;
    Ok(MetricsReport {
        nmi: scores.nmi,
        acc: scores.acc,
        ari: scores.ari,
        probe_accuracy: pr.accuracy,
        confusion: pr.confusion,
        wcss: scores.wcss,
    })
}
