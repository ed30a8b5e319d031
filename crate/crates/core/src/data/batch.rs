//! Seeded mini-batch iteration with per-class sample weights.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::LabeledDataset;
use crate::error::{BvaeError, Result};
use crate::nn::one_hot;
use crate::rng;
use crate::tensor::Tensor;
use crate::NUM_CLASSES;

/// Multiplicative loss weight per digit class.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassWeights(pub [f32; NUM_CLASSES]);

impl Default for ClassWeights {
    fn default() -> Self {
        Self([1.0; NUM_CLASSES])
    }
}

impl ClassWeights {
    pub fn uniform(c: f32) -> Self {
        Self([c; NUM_CLASSES])
    }

    /// Weights equal to 1 except `up` classes multiplied and `down` classes
    /// divided by `factor`.
    pub fn scaled(up: &[usize], down: &[usize], factor: f32) -> Self {
        let mut w = [1.0; NUM_CLASSES];
        up.iter().for_each(|&c| w[c] = factor);
        down.iter().for_each(|&c| w[c] = 1.0 / factor);
        Self(w)
    }

    /// Named presets: `x10` = {0,1,2}x10 and {3,6,7,9}/10; `x2a` =
    /// {0,1,2,6}x2 and {3,5,7,9}/2; `x2b` = {0,6}x2 and {4,5,8}/2.
    pub fn preset(name: &str) -> Result<Self> {
        match name {
            "uniform" => Ok(Self::default()),
            "x10" => Ok(Self::scaled(&[0, 1, 2], &[3, 6, 7, 9], 10.0)),
            "x2a" => Ok(Self::scaled(&[0, 1, 2, 6], &[3, 5, 7, 9], 2.0)),
            "x2b" => Ok(Self::scaled(&[0, 6], &[4, 5, 8], 2.0)),
            _ => Err(BvaeError::Config(format!(
                "unknown class-weight preset {name:?} (uniform, x10, x2a, x2b)"
            ))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.0.iter().all(|w| w.is_finite() && *w > 0.0) {
            Ok(())
        } else {
            Err(BvaeError::Config(format!("class weights must be positive: {:?}", self.0)))
        }
    }

    pub fn get(&self, class: u8) -> f32 {
        self.0[class as usize]
    }
}

/// One mini-batch.
#[derive(Clone, Debug)]
pub struct Batch {
    pub indices: Vec<usize>,
    pub images: Tensor<f32>,
    pub labels: Vec<u8>,
    pub one_hot: Tensor<f32>,
    pub weights: Vec<f32>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

pub struct BatchIter<'a> {
    ds: &'a LabeledDataset,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    weights: ClassWeights,
}

impl Iterator for BatchIter<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let indices = self.order[self.pos..end].to_vec();
        self.pos = end;
        let labels: Vec<u8> = indices.iter().map(|&i| self.ds.labels[i]).collect();
        Some(Batch {
            images: self.ds.images.gather_rows(&indices),
            one_hot: one_hot(&labels, NUM_CLASSES),
            weights: labels.iter().map(|&l| self.weights.get(l)).collect(),
            labels,
            indices,
        })
    }
}

impl BatchIter<'_> {
    pub fn num_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

/// Sample order for `(seed, epoch)`: a fresh permutation per epoch.
pub fn epoch_order(n: usize, seed: u64, epoch: u64) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(seed, "shuffle", epoch));
    order
}

/// Shuffled batches covering `ds` exactly once; the last batch may be short.
pub fn batch_iter(
    ds: &LabeledDataset,
    batch_size: usize,
    seed: u64,
    epoch: u64,
    weights: ClassWeights,
) -> Result<BatchIter<'_>> {
    if batch_size < 1 {
        return Err(BvaeError::Config("batch_size must be at least 1".into()));
    }
    weights.validate()?;
    Ok(BatchIter {
        ds,
        order: epoch_order(ds.len(), seed, epoch),
        pos: 0,
        batch_size,
        weights,
    })
}
