//! Clustering and classification metrics over latent codes.

pub mod hungarian;
pub mod kmeans;
pub mod scores;
pub mod selftest;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::tensor::{Scalar, Tensor};
use crate::NUM_CLASSES;

pub use hungarian::{assignment_cost, hungarian};
pub use kmeans::{kmeans, KmeansConfig, Partition};
pub use selftest::{run_selftest, SelfTestResult};
pub use scores::{acc, ari, confusion_matrix, mutual_information, nmi, pair_counts, Contingency, PairCounts};

/// Clustering and probe scores of one trained model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub nmi: f64,
    pub acc: f64,
    pub ari: f64,
    pub probe_accuracy: f64,
    pub confusion: [[u64; NUM_CLASSES]; NUM_CLASSES],
    pub wcss: f64,
}

/// NMI, ACC and ARI of a k-means partition against the labels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClusterScores {
    pub nmi: f64,
    pub acc: f64,
    pub ari: f64,
    pub wcss: f64,
}

pub fn cluster_scores<T: Scalar>(codes: &Tensor<T>, labels: &[u8], cfg: &KmeansConfig) -> Result<ClusterScores> {
    let part = kmeans(codes, cfg)?;
    let l: Vec<usize> = labels.iter().map(|&v| v as usize).collect();
    Ok(ClusterScores {
        nmi: nmi(&l, &part.assignments)?,
        acc: acc(&l, &part.assignments)?,
        ari: ari(&l, &part.assignments)?,
        wcss: part.wcss,
    })
}

/// Fraction of matching entries.
pub fn accuracy(truth: &[u8], predicted: &[u8]) -> f64 {
    if truth.is_empty() {
        return 0.0;
    }
    truth.iter().zip(predicted).filter(|(a, b)| a == b).count() as f64 / truth.len() as f64
}
