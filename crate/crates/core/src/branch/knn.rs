//! Exact k-nearest-neighbour classifier by brute-force Euclidean search.

use crate::error::{BvaeError, Result};
use crate::tensor::{Scalar, Tensor};
use crate::NUM_CLASSES;

use super::soft_knn::{k_nearest, sq_dist};

#[derive(Clone, Debug, PartialEq)]
pub struct KnnClassifier {
    dim: usize,
    points: Vec<f64>,
    labels: Vec<u8>,
    n: usize,
}

/// Stores the training codes; `n` is the neighbour count.
pub fn fit_exact_knn<T: Scalar>(train_z: &Tensor<T>, train_labels: &[u8], n: usize) -> Result<KnnClassifier> {
    if train_z.ndim() != 2 || train_z.rows() != train_labels.len() {
        return Err(BvaeError::dim(
            "fit_exact_knn",
            format!("codes {:?} vs {} labels", train_z.shape(), train_labels.len()),
        ));
    }
    if n == 0 || n > train_labels.len() {
        return Err(BvaeError::Config(format!(
            "kNN neighbour count {n} outside 1..={}",
            train_labels.len()
        )));
    }
    Ok(KnnClassifier {
        dim: train_z.row_len(),
        points: train_z.data().iter().map(|v| v.as_f64()).collect(),
        labels: train_labels.to_vec(),
        n,
    })
}

impl KnnClassifier {
    pub fn n(&self) -> usize {
        self.n
    }

    /// Indices of the `n` nearest training points, nearest first; equal
    /// distances are ordered by training index.
    pub fn neighbours(&self, q: &[f64]) -> Vec<usize> {
        let mut d: Vec<(f64, usize)> = self
            .points
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(j, p)| (sq_dist(q, p), j))
            .collect();
        k_nearest(&mut d, self.n).iter().map(|&(_, j)| j).collect()
    }

    fn votes(&self, q: &[f64]) -> [f64; NUM_CLASSES] {
        let mut v = [0.0; NUM_CLASSES];
        for j in self.neighbours(q) {
            v[self.labels[j] as usize] += 1.0;
        }
        v.iter_mut().for_each(|x| *x /= self.n as f64);
        v
    }

    fn check<T: Scalar>(&self, q: &Tensor<T>) -> Result<()> {
        if q.ndim() != 2 || q.row_len() != self.dim {
            return Err(BvaeError::dim("kNN predict", format!("query {:?}, dim {}", q.shape(), self.dim)));
        }
        Ok(())
    }

    /// Vote fractions, `[B × 10]`.
    pub fn predict_proba<T: Scalar>(&self, q: &Tensor<T>) -> Result<Tensor<f64>> {
        self.check(q)?;
        let mut out = Tensor::zeros(&[q.rows(), NUM_CLASSES]);
        for r in 0..q.rows() {
            let qr: Vec<f64> = q.row(r).iter().map(|v| v.as_f64()).collect();
            out.row_mut(r).copy_from_slice(&self.votes(&qr));
        }
        Ok(out)
    }

    /// Majority vote; ties go to the lowest class index.
    pub fn predict<T: Scalar>(&self, q: &Tensor<T>) -> Result<Vec<u8>> {
        Ok(argmax_rows(&self.predict_proba(q)?))
    }
}

/// Row-wise argmax, first maximum wins.
pub fn argmax_rows(p: &Tensor<f64>) -> Vec<u8> {
    (0..p.rows())
        .map(|r| {
            let row = p.row(r);
            let mut best = 0;
            for (c, &v) in row.iter().enumerate() {
                if v > row[best] {
                    best = c;
                }
            }
            best as u8
        })
        .collect()
}
