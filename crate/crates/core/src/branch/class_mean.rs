//! Nearest-class-mean surrogate: a softmax over negative squared distances
//! to running per-class centroids of the latent codes.

use serde::{Deserialize, Serialize};

use crate::NUM_CLASSES;

pub const CENTROID_MOMENTUM: f64 = 0.9;

/// Running class centroids; classes not yet observed are masked out.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassCentroids {
    pub dim: usize,
    pub momentum: f64,
    /// `[10 × dim]`, row-major.
    pub means: Vec<f64>,
    pub seen: [bool; NUM_CLASSES],
}

impl ClassCentroids {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            momentum: CENTROID_MOMENTUM,
            means: vec![0.0; NUM_CLASSES * dim],
            seen: [false; NUM_CLASSES],
        }
    }

    pub fn mean(&self, c: usize) -> &[f64] {
        &self.means[c * self.dim..(c + 1) * self.dim]
    }

    fn batch_means(&self, z: &[f64], labels: &[u8]) -> ([usize; NUM_CLASSES], Vec<f64>) {
        let mut counts = [0usize; NUM_CLASSES];
        let mut sums = vec![0.0; NUM_CLASSES * self.dim];
        for (row, &l) in z.chunks_exact(self.dim).zip(labels) {
            counts[l as usize] += 1;
            for (s, v) in sums[l as usize * self.dim..].iter_mut().zip(row) {
                *s += v;
            }
        }
        for c in 0..NUM_CLASSES {
            if counts[c] > 0 {
                sums[c * self.dim..(c + 1) * self.dim]
                    .iter_mut()
                    .for_each(|s| *s /= counts[c] as f64);
            }
        }
        (counts, sums)
    }

    /// Initializes centroids of classes present in the batch but not yet seen.
    pub fn seed_missing(&mut self, z: &[f64], labels: &[u8]) {
        let (counts, means) = self.batch_means(z, labels);
        for c in 0..NUM_CLASSES {
            if counts[c] > 0 && !self.seen[c] {
                self.means[c * self.dim..(c + 1) * self.dim]
                    .copy_from_slice(&means[c * self.dim..(c + 1) * self.dim]);
                self.seen[c] = true;
            }
        }
    }

    /// Momentum update `C ← m·C + (1 − m)·batch mean` for present classes.
    pub fn update(&mut self, z: &[f64], labels: &[u8]) {
        let (counts, means) = self.batch_means(z, labels);
        let m = self.momentum;
        for c in 0..NUM_CLASSES {
            if counts[c] == 0 {
                continue;
            }
            let dst = &mut self.means[c * self.dim..(c + 1) * self.dim];
            let src = &means[c * self.dim..(c + 1) * self.dim];
            if self.seen[c] {
                dst.iter_mut().zip(src).for_each(|(d, s)| *d = m * *d + (1.0 - m) * s);
            } else {
                dst.copy_from_slice(src);
                self.seen[c] = true;
            }
        }
    }

    /// Class probabilities of one code.
    pub fn probs(&self, z: &[f64], tau: f64) -> [f64; NUM_CLASSES] {
        let mut s = [f64::NEG_INFINITY; NUM_CLASSES];
        for c in 0..NUM_CLASSES {
            if self.seen[c] {
                s[c] = -super::soft_knn::sq_dist(z, self.mean(c)) / tau;
            }
        }
        let max = s.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut p = [0.0; NUM_CLASSES];
        if max == f64::NEG_INFINITY {
            return [1.0 / NUM_CLASSES as f64; NUM_CLASSES];
        }
        let mut sum = 0.0;
        for c in 0..NUM_CLASSES {
            p[c] = (s[c] - max).exp();
            sum += p[c];
        }
        p.iter_mut().for_each(|v| *v /= sum);
        p
    }

    /// Gradient of `a · (-ln p[y])` w.r.t. the code, centroids held fixed.
    pub fn grad(&self, z: &[f64], probs: &[f64; NUM_CLASSES], label: u8, a: f64, tau: f64, out: &mut [f64]) {
        for c in 0..NUM_CLASSES {
            if !self.seen[c] {
                continue;
            }
            let y = if c == label as usize { 1.0 } else { 0.0 };
            let coef = a * (probs[c] - y) * -2.0 / tau;
            for ((o, zi), ci) in out.iter_mut().zip(z).zip(self.mean(c)) {
                *o += coef * (zi - ci);
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn momentum_update() {
        let mut c = ClassCentroids::new(1);
        c.update(&[2.0, 4.0], &[1, 1]);
        assert_eq!(c.mean(1), &[3.0]);
        c.update(&[13.0], &[1]);
        assert!((c.mean(1)[0] - (0.9 * 3.0 + 0.1 * 13.0)).abs() < 1e-12);
        assert!(!c.seen[0]);
    }

    #[test]
    fn probs_on_simplex_and_masked() {
        let mut c = ClassCentroids::new(2);
        c.seed_missing(&[0.0, 0.0, 5.0, 5.0], &[2, 8]);
        let p = c.probs(&[0.1, 0.0], 1.0);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(p[2] > 0.99);
        assert_eq!(p[0], 0.0);
    }
}
