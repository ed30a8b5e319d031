//! Datasets, augmentation, fixed-output targets, and batching.

pub mod batch;
pub mod cache;
pub mod idx;
pub mod rotate;
pub mod synthetic;
pub mod targets;

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{BvaeError, Result};
use crate::tensor::Tensor;

pub use batch::{batch_iter, Batch, BatchIter, ClassWeights};
pub use idx::{load_idx, load_mnist_split, verify_mnist, write_idx};
pub use rotate::{make_rotated_dataset, rotate_image};
pub use synthetic::{blob_bundle, blob_dataset};
pub use targets::{make_target_set, TargetKind, TargetSet};

/// Environment variable naming the directory with the MNIST IDX files.
pub const DATA_DIR_ENV: &str = "BVAE_DATA_DIR";

/// Data directory from `BVAE_DATA_DIR`, falling back to `./data/mnist`.
pub fn data_dir() -> PathBuf {
    std::env::var_os(DATA_DIR_ENV)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from("data/mnist"))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

/// Which input distribution a run trains on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetKind {
    Mnist,
    MnistRotated,
}

/// Images `[N, H, W, 1]` with pixels in `[0, 1]` and labels in `0..=9`.
#[derive(Clone, Debug, PartialEq)]
pub struct LabeledDataset {
    pub images: Tensor<f32>,
    pub labels: Vec<u8>,
    pub split: Split,
    /// Seed of the per-sample rotation angles, when augmented.
    pub rotation_seed: Option<u64>,
}

impl LabeledDataset {
    pub fn new(images: Tensor<f32>, labels: Vec<u8>, split: Split) -> Result<Self> {
        let ds = Self {
            images,
            labels,
            split,
            rotation_seed: None,
        };
        ds.validate()?;
        Ok(ds)
    }

    pub fn validate(&self) -> Result<()> {
        if self.images.ndim() != 4 || self.images.shape()[3] != 1 {
            return Err(BvaeError::dim(
                "dataset",
                format!("images must be [N, H, W, 1], got {:?}", self.images.shape()),
            ));
        }
        if self.images.rows() != self.labels.len() {
            return Err(BvaeError::Consistency(format!(
                "{} images but {} labels",
                self.images.rows(),
                self.labels.len()
            )));
        }
        if let Some(l) = self.labels.iter().find(|&&l| l > 9) {
            return Err(BvaeError::Validation(format!("label {l} outside 0..9")));
        }
        if let Some(v) = self.images.data().iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(BvaeError::Validation(format!("pixel {v} outside [0, 1]")));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dims(&self) -> [usize; 4] {
        let s = self.images.shape();
        [s[0], s[1], s[2], s[3]]
    }

    /// Pixels per image.
    pub fn image_len(&self) -> usize {
        self.images.row_len()
    }

    /// First `n` samples.
    pub fn head(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            images: self.images.slice_rows(0, n),
            labels: self.labels[..n].to_vec(),
            split: self.split,
            rotation_seed: self.rotation_seed,
        }
    }

    pub fn subset(&self, idx: &[usize]) -> Self {
        Self {
            images: self.images.gather_rows(idx),
            labels: idx.iter().map(|&i| self.labels[i]).collect(),
            split: self.split,
            rotation_seed: self.rotation_seed,
        }
    }

    pub fn class_counts(&self) -> [usize; 10] {
        let mut c = [0; 10];
        for &l in &self.labels {
            c[l as usize] += 1;
        }
        c
    }
}

/// Train and test splits of one input distribution.
#[derive(Clone, Debug)]
pub struct DataBundle {
    pub train: LabeledDataset,
    pub test: LabeledDataset,
}

/// Default seed of the fixed rotation angles; train and test use derived
/// sub-streams so the two splits never share angles.
pub const DEFAULT_ROTATION_SEED: u64 = 0x5eed_0f_a9;

/// Loads (and optionally rotates) MNIST from `dir` after checksum
/// verification.
pub fn load_bundle(dir: &Path, kind: DatasetKind, rotation_seed: u64) -> Result<DataBundle> {
    verify_mnist(dir)?;
    let train = load_mnist_split(dir, Split::Train)?;
    let test = load_mnist_split(dir, Split::Test)?;
    Ok(match kind {
        DatasetKind::Mnist => DataBundle { train, test },
        DatasetKind::MnistRotated => DataBundle {
            train: make_rotated_dataset(&train, crate::rng::derive_seed(rotation_seed, "rotate-train", 0)),
            test: make_rotated_dataset(&test, crate::rng::derive_seed(rotation_seed, "rotate-test", 0)),
        },
    })
}
