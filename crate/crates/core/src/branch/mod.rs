//! Classifier branches over latent codes.
//!
//! MLP and linear heads are ordinary networks trained jointly with the VAE.
//! Instance-based branches use differentiable surrogates during training:
//! kNN branches a soft-kNN vote over the other codes of the batch, random
//! forest branches a softmax over distances to running class centroids.
//! The exact classifiers ([`fit_exact_knn`], [`fit_random_forest`]) are
//! refit on frozen codes for reporting.

pub mod class_mean;
pub mod forest;
pub mod knn;
pub mod soft_knn;

use serde::{Deserialize, Serialize};

use crate::error::{BvaeError, Result};
use crate::nn::{softmax_cross_entropy, Activation, LayerSpec, ParamRef, Sequential};
use crate::rng;
use crate::tensor::{Scalar, Tensor};
use crate::NUM_CLASSES;

pub use class_mean::ClassCentroids;
pub use forest::{fit_random_forest, RandomForest};
pub use knn::{argmax_rows, fit_exact_knn, KnnClassifier};
pub use soft_knn::{soft_knn_probs, PROB_FLOOR};

/// Hidden widths of the MLP branch.
pub const MLP_WIDTHS: [usize; 3] = [512, 256, 128];
/// Temperature of the surrogates standing in for exact kNN and forests.
pub const SURROGATE_TAU: f64 = 1.0;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BranchKind {
    Mlp,
    Linear,
    SoftKnn { k: usize, tau: f64 },
    ClassMean { tau: f64 },
    ExactKnn { n: usize },
    RandomForest { n_estimators: usize, max_depth: usize },
}

/// What actually runs inside the training step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Surrogate {
    Head,
    SoftKnn { k: usize, tau: f64 },
    ClassMean { tau: f64 },
}

impl BranchKind {
    pub fn surrogate(&self) -> Surrogate {
        match *self {
            BranchKind::Mlp | BranchKind::Linear => Surrogate::Head,
            BranchKind::SoftKnn { k, tau } => Surrogate::SoftKnn { k, tau },
            BranchKind::ExactKnn { n } => Surrogate::SoftKnn {
                k: n,
                tau: SURROGATE_TAU,
            },
            BranchKind::ClassMean { tau } => Surrogate::ClassMean { tau },
            BranchKind::RandomForest { .. } => Surrogate::ClassMean { tau: SURROGATE_TAU },
        }
    }

    /// Whether an exact classifier is refit each epoch for reporting.
    pub fn has_exact_classifier(&self) -> bool {
        matches!(self, BranchKind::ExactKnn { .. } | BranchKind::RandomForest { .. })
    }

    pub fn validate(&self, batch_size: usize) -> Result<()> {
        let bad = |m: String| Err(BvaeError::Config(m));
        match *self {
            BranchKind::SoftKnn { tau, .. } | BranchKind::ClassMean { tau } if !(tau > 0.0) => {
                bad(format!("branch temperature must be positive, got {tau}"))
            }
            BranchKind::SoftKnn { k: n, .. } | BranchKind::ExactKnn { n } if n == 0 || n >= batch_size => {
                bad(format!("neighbour count {n} must be in 1..{batch_size}"))
            }
            BranchKind::RandomForest { n_estimators, max_depth } if n_estimators == 0 || max_depth == 0 => {
                bad("random forest needs estimators and depth of at least 1".into())
            }
            _ => Ok(()),
        }
    }

    /// Head layers for `Mlp` / `Linear`.
    pub fn head_specs(&self, latent_dim: usize) -> Option<Vec<LayerSpec>> {
        match self {
            BranchKind::Mlp => {
                let mut specs = Vec::new();
                let mut prev = latent_dim;
                for w in MLP_WIDTHS {
                    specs.push(LayerSpec::dense(prev, w));
                    specs.push(LayerSpec::act(Activation::Relu));
                    prev = w;
                }
                specs.push(LayerSpec::dense(prev, NUM_CLASSES));
                Some(specs)
            }
            BranchKind::Linear => Some(vec![LayerSpec::dense(latent_dim, NUM_CLASSES)]),
            _ => None,
        }
    }
}

enum OutputState<T> {
    Head { logits: Tensor<T> },
    SoftKnn { z: Vec<f64>, hoods: Vec<soft_knn::Neighbourhood>, tau: f64 },
    ClassMean { z: Vec<f64>, tau: f64 },
}

/// Result of a branch forward pass over one batch.
pub struct BranchOutput<T> {
    /// `[B × 10]`, rows on the probability simplex.
    pub probs: Tensor<f64>,
    /// Whether `branch_loss` yields a gradient w.r.t. the codes.
    pub differentiable: bool,
    /// Unweighted cross-entropy of each sample.
    pub per_sample: Vec<f64>,
    labels: Vec<u8>,
    state: OutputState<T>,
}

/// A branch with its trainable state.
#[derive(Clone, Debug)]
pub struct Branch<T = f32> {
    pub kind: BranchKind,
    pub latent_dim: usize,
    pub head: Option<Sequential<T>>,
    pub centroids: Option<ClassCentroids>,
}

fn ce_from_probs(p: &[f64], label: u8) -> f64 {
    -p[label as usize].max(PROB_FLOOR).ln()
}

impl<T: Scalar> Branch<T> {
    /// Head weights come from a stream derived from `seed`.
    pub fn new(kind: BranchKind, latent_dim: usize, seed: u64) -> Result<Self> {
        let head = match kind.head_specs(latent_dim) {
            Some(specs) => Some(Sequential::new(
                "branch",
                &[latent_dim],
                specs,
                &mut rng::stream(seed, "init-branch", 0),
            )?),
            None => None,
        };
        let centroids = matches!(kind.surrogate(), Surrogate::ClassMean { .. }).then(|| ClassCentroids::new(latent_dim));
        Ok(Self {
            kind,
            latent_dim,
            head,
            centroids,
        })
    }

    /// Evaluates the branch on a batch. Instance-based surrogates use the
    /// batch itself (codes and labels) as context, excluding self-pairs.
    /// `k` is capped by the caller-supplied `max_k` for short batches.
    pub fn forward(&mut self, z: &Tensor<T>, labels: &[u8]) -> Result<BranchOutput<T>> {
        self.forward_capped(z, labels, usize::MAX)
    }

    pub fn forward_capped(&mut self, z: &Tensor<T>, labels: &[u8], max_k: usize) -> Result<BranchOutput<T>> {
        if z.ndim() != 2 || z.row_len() != self.latent_dim || z.rows() != labels.len() {
            return Err(BvaeError::dim(
                "branch",
                format!("codes {:?}, {} labels, latent dim {}", z.shape(), labels.len(), self.latent_dim),
            ));
        }
        let b = z.rows();
        let dim = self.latent_dim;
        let zf: Vec<f64> = z.data().iter().map(|v| v.as_f64()).collect();
        let mut probs = Tensor::zeros(&[b, NUM_CLASSES]);
        let state = match self.kind.surrogate() {
            Surrogate::Head => {
                let head = self.head.as_mut().expect("head branch has a network");
                let logits = head.forward(z.clone())?;
                for r in 0..b {
                    let row: Vec<f64> = logits.row(r).iter().map(|v| v.as_f64()).collect();
                    crate::nn::activation::softmax_row(&row, probs.row_mut(r));
                }
                OutputState::Head { logits }
            }
            Surrogate::SoftKnn { k, tau } => {
                let hoods = soft_knn::batch_neighbourhoods(&zf, dim, labels, k.min(max_k), tau)?;
                for (r, h) in hoods.iter().enumerate() {
                    probs.row_mut(r).copy_from_slice(&h.probs);
                }
                OutputState::SoftKnn { z: zf, hoods, tau }
            }
            Surrogate::ClassMean { tau } => {
                let c = self.centroids.as_mut().expect("class-mean branch has centroids");
                c.seed_missing(&zf, labels);
                for r in 0..b {
                    probs.row_mut(r).copy_from_slice(&c.probs(&zf[r * dim..(r + 1) * dim], tau));
                }
                OutputState::ClassMean { z: zf, tau }
            }
        };
        let per_sample = (0..b).map(|r| ce_from_probs(probs.row(r), labels[r])).collect();
        Ok(BranchOutput {
            probs,
            differentiable: true,
            per_sample,
            labels: labels.to_vec(),
            state,
        })
    }

    /// Weighted mean cross-entropy `Σ_b w_b·CE_b / B` and its gradient w.r.t.
    /// the codes. Head parameter gradients are accumulated into the head.
    pub fn loss(&mut self, out: &BranchOutput<T>, sample_weights: &[T]) -> Result<(f64, Tensor<T>)> {
        let b = out.labels.len();
        if sample_weights.len() != b {
            return Err(BvaeError::dim("branch loss", format!("{} weights for {b} samples", sample_weights.len())));
        }
        if let Some(i) = out.probs.data().iter().position(|p| !p.is_finite()) {
            return Err(BvaeError::NonFinite(format!(
                "branch probability of sample {} class {} is {}",
                i / NUM_CLASSES,
                i % NUM_CLASSES,
                out.probs.data()[i]
            )));
        }
        let dim = self.latent_dim;
        let coef: Vec<f64> = sample_weights.iter().map(|w| w.as_f64() / b as f64).collect();
        let loss: f64 = out.per_sample.iter().zip(&coef).map(|(l, c)| l * c).sum();
        let grad: Vec<f64> = match &out.state {
            OutputState::Head { logits } => {
                let onehot = crate::nn::one_hot::<T>(&out.labels, NUM_CLASSES);
                let (_, g_logits) = softmax_cross_entropy(logits, &onehot, sample_weights)?;
                let head = self.head.as_mut().expect("head branch has a network");
                let gz = head.backward(&g_logits)?;
                return Ok((loss, gz));
            }
            OutputState::SoftKnn { z, hoods, tau } => soft_knn::batch_grad(z, dim, &out.labels, hoods, &coef, *tau),
            OutputState::ClassMean { z, tau } => {
                let c = self.centroids.as_ref().expect("class-mean branch has centroids");
                let mut g = vec![0.0; z.len()];
                for r in 0..b {
                    let p: [f64; NUM_CLASSES] = out.probs.row(r).try_into().expect("10 classes");
                    c.grad(&z[r * dim..(r + 1) * dim], &p, out.labels[r], coef[r], *tau, &mut g[r * dim..(r + 1) * dim]);
                }
                g
            }
        };
        let gz = Tensor::from_vec(&[b, dim], grad.into_iter().map(T::lit).collect())?;
        Ok((loss, gz))
    }

    /// Post-step bookkeeping: moves class centroids towards the batch means.
    pub fn observe(&mut self, z: &Tensor<T>, labels: &[u8]) {
        if let Some(c) = self.centroids.as_mut() {
            let zf: Vec<f64> = z.data().iter().map(|v| v.as_f64()).collect();
            c.update(&zf, labels);
        }
    }

    pub fn param_refs(&mut self) -> Vec<ParamRef<'_, T>> {
        self.head.as_mut().map(|h| h.param_refs()).unwrap_or_default()
    }

    pub fn zero_grads(&mut self) {
        if let Some(h) = self.head.as_mut() {
            h.zero_grads();
        }
    }

    pub fn clear_caches(&mut self) {
        if let Some(h) = self.head.as_mut() {
            h.clear_caches();
        }
    }

    /// Class probabilities for frozen codes (no caches). Instance-based
    /// surrogates need the labels of `z` as context.
    pub fn predict_proba(&self, z: &Tensor<T>, labels: &[u8]) -> Result<Tensor<f64>> {
        if let Some(head) = self.head.as_ref() {
            let logits = head.predict(z)?;
            let mut probs = Tensor::zeros(&[z.rows(), NUM_CLASSES]);
            for r in 0..z.rows() {
                let row: Vec<f64> = logits.row(r).iter().map(|v| v.as_f64()).collect();
                crate::nn::activation::softmax_row(&row, probs.row_mut(r));
            }
            return Ok(probs);
        }
        Ok(self.clone().forward(z, labels)?.probs)
    }
}

/// Free-function form of [`Branch::forward`].
pub fn branch_forward<T: Scalar>(branch: &mut Branch<T>, z: &Tensor<T>, labels: &[u8]) -> Result<BranchOutput<T>> {
    branch.forward(z, labels)
}

/// Free-function form of [`Branch::loss`].
pub fn branch_loss<T: Scalar>(
    branch: &mut Branch<T>,
    out: &BranchOutput<T>,
    sample_weights: &[T],
) -> Result<(f64, Tensor<T>)> {
    branch.loss(out, sample_weights)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::grad_check;

    fn codes() -> (Tensor<f64>, Vec<u8>) {
        let z = Tensor::from_vec(
            &[6, 2],
            vec![0.1, 0.3, -0.4, 0.8, 0.9, -0.2, 0.35, 0.05, -0.7, -0.6, 0.5, 0.9],
        )
        .unwrap();
        (z, vec![1, 1, 2, 2, 1, 2])
    }

    #[test]
    fn zero_linear_head_is_uniform() {
        let mut br = Branch::<f64>::new(BranchKind::Linear, 2, 0).unwrap();
        br.head.as_mut().unwrap().params_mut().for_each(|p| p.fill(0.0));
        let (z, labels) = codes();
        let out = br.forward(&z, &labels).unwrap();
        assert!(out.probs.data().iter().all(|&p| (p - 0.1).abs() < 1e-15));
        let (l, _) = br.loss(&out, &[1.0; 6]).unwrap();
        assert!((l - 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn mlp_layer_widths() {
        let br = Branch::<f32>::new(BranchKind::Mlp, 2, 0).unwrap();
        let dims: Vec<_> = br
            .head
            .unwrap()
            .layers
            .iter()
            .filter_map(|l| match l.spec {
                LayerSpec::Dense { outputs, .. } => Some(outputs),
                _ => None,
            })
            .collect();
        assert_eq!(dims, vec![512, 256, 128, 10]);
    }

    fn check_grad(kind: BranchKind) {
        let (z, labels) = codes();
        let w = [1.0, 2.0, 0.5, 1.0, 1.5, 1.0];
        let mut br = Branch::<f64>::new(kind.clone(), 2, 3).unwrap();
        let out = br.forward(&z, &labels).unwrap();
        let (_, gz) = br.loss(&out, &w).unwrap();
        let frozen = br.clone();
        let report = grad_check(
            std::slice::from_ref(&z),
            &[gz],
            |p| {
                let mut b = frozen.clone();
                let o = b.forward(&p[0], &labels).unwrap();
                b.loss(&o, &w).unwrap().0
            },
            1e-5,
            1,
        );
        assert!(report.max_relative_error < 1e-4, "{kind:?}: {report:?}");
    }

    #[test]
    fn soft_knn_grad_matches_finite_differences() {
        check_grad(BranchKind::SoftKnn { k: 3, tau: 0.5 });
    }

    #[test]
    fn class_mean_grad_matches_finite_differences() {
        check_grad(BranchKind::ClassMean { tau: 0.7 });
    }

    #[test]
    fn mlp_grad_matches_finite_differences() {
        check_grad(BranchKind::Linear);
        check_grad(BranchKind::Mlp);
    }

    #[test]
    fn perfect_prediction_zero_loss_and_grad() {
        let z = Tensor::from_vec(&[4, 1], vec![0.0f64, 0.1, 10.0, 10.1]).unwrap();
        let labels = [3, 3, 5, 5];
        let mut br = Branch::<f64>::new(BranchKind::SoftKnn { k: 1, tau: 1.0 }, 1, 0).unwrap();
        let out = br.forward(&z, &labels).unwrap();
        let (l, g) = br.loss(&out, &[1.0; 4]).unwrap();
        assert!(l.abs() < 1e-12);
        assert!(g.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn uniform_weights_scale_loss() {
        let (z, labels) = codes();
        let mut br = Branch::<f64>::new(BranchKind::SoftKnn { k: 4, tau: 1.0 }, 2, 0).unwrap();
        let out = br.forward(&z, &labels).unwrap();
        let (l1, _) = br.loss(&out, &[1.0; 6]).unwrap();
        let (l3, _) = br.loss(&out, &[3.0; 6]).unwrap();
        assert!((l3 - 3.0 * l1).abs() < 1e-12);
    }

    #[test]
    fn batch_too_small_for_k_is_config_error() {
        let (z, labels) = codes();
        let mut br = Branch::<f64>::new(BranchKind::SoftKnn { k: 6, tau: 1.0 }, 2, 0).unwrap();
        assert!(matches!(br.forward(&z, &labels), Err(BvaeError::Config(_))));
    }

    #[test]
    fn rows_on_simplex() {
        let (z, labels) = codes();
        for kind in [BranchKind::Mlp, BranchKind::SoftKnn { k: 3, tau: 0.2 }, BranchKind::RandomForest { n_estimators: 3, max_depth: 3 }] {
            let mut br = Branch::<f64>::new(kind, 2, 1).unwrap();
            let out = br.forward(&z, &labels).unwrap();
            for r in 0..6 {
                assert!((out.probs.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
                assert!(out.probs.row(r).iter().all(|&p| p >= 0.0));
            }
        }
    }
}
