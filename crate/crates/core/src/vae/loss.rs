//! Loss terms of the branched objective. Every term sums over pixels or
//! latent dimensions and averages over the batch.

use serde::{Deserialize, Serialize};

use crate::error::{BvaeError, Result};
use crate::nn::sigmoid;
use crate::tensor::{Scalar, Tensor};

/// Probability clamp used by the binary cross-entropy.
pub const BCE_EPS: f64 = 1e-7;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReconMode {
    Bce,
    Mse,
}

/// Per-sample closed-form KL(N(μ, σ²) || N(0, I)).
pub fn kl_per_sample<T: Scalar>(mu: &Tensor<T>, log_var: &Tensor<T>) -> Vec<f64> {
    (0..mu.rows())
        .map(|r| {
            -0.5 * mu
                .row(r)
                .iter()
                .zip(log_var.row(r))
                .map(|(&m, &lv)| {
                    let (m, lv) = (m.as_f64(), lv.as_f64());
                    1.0 + lv - lv.exp() - m * m
                })
                .sum::<f64>()
        })
        .collect()
}

/// Batch-mean KL divergence to the standard normal prior.
pub fn kl_divergence<T: Scalar>(mu: &Tensor<T>, log_var: &Tensor<T>) -> f64 {
    let per = kl_per_sample(mu, log_var);
    per.iter().sum::<f64>() / per.len().max(1) as f64
}

fn check_pair<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(BvaeError::dim(
            "reconstruction loss",
            format!("{:?} vs {:?}", a.shape(), b.shape()),
        ));
    }
    Ok(())
}

/// Per-sample reconstruction loss on activated outputs, plus the number of
/// BCE probabilities that had to be clamped into `[1e-7, 1 - 1e-7]`.
pub fn reconstruction_per_sample<T: Scalar>(
    x_hat: &Tensor<T>,
    target: &Tensor<T>,
    mode: ReconMode,
) -> Result<(Vec<f64>, usize)> {
    check_pair(x_hat, target)?;
    let mut clamped = 0;
    let per = (0..x_hat.rows())
        .map(|r| {
            x_hat
                .row(r)
                .iter()
                .zip(target.row(r))
                .map(|(&p, &t)| {
                    let (p, t) = (p.as_f64(), t.as_f64());
                    match mode {
                        ReconMode::Mse => (p - t) * (p - t),
                        ReconMode::Bce => {
                            let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
                            if pc != p {
                                clamped += 1;
                            }
                            -(t * pc.ln() + (1.0 - t) * (1.0 - pc).ln())
                        }
                    }
                })
                .sum::<f64>()
        })
        .collect();
    Ok((per, clamped))
}

/// Batch-mean reconstruction loss.
pub fn reconstruction_loss<T: Scalar>(x_hat: &Tensor<T>, target: &Tensor<T>, mode: ReconMode) -> Result<f64> {
    let (per, clamped) = reconstruction_per_sample(x_hat, target, mode)?;
    if clamped > 0 {
        log::debug!("binary cross-entropy clamped {clamped} probabilities");
    }
    Ok(per.iter().sum::<f64>() / per.len().max(1) as f64)
}

/// Per-sample reconstruction losses computed from decoder logits, with
/// the gradient of each sample's loss w.r.t. its logits.
///
/// `Bce` pairs with a sigmoid output and uses the logit form
/// `softplus(l) - t·l`; `Mse` pairs with a ReLU output.
pub fn reconstruction_from_logits<T: Scalar>(
    logits: &Tensor<T>,
    target: &Tensor<T>,
    mode: ReconMode,
) -> Result<(Vec<f64>, Tensor<T>)> {
    check_pair(logits, target)?;
    let mut grad = Tensor::zeros(logits.shape());
    let mut per = Vec::with_capacity(logits.rows());
    for r in 0..logits.rows() {
        let mut acc = 0.0f64;
        let g = grad.row_mut(r);
        for ((gi, &l), &t) in g.iter_mut().zip(logits.row(r)).zip(target.row(r)) {
            match mode {
                ReconMode::Bce => {
                    let lf = l.as_f64();
                    // softplus(l) - t*l, stable for large |l|
                    acc += lf.max(0.0) + (-lf.abs()).exp().ln_1p() - t.as_f64() * lf;
                    *gi = sigmoid(l) - t;
                }
                ReconMode::Mse => {
                    let y = l.max(T::zero());
                    let d = y - t;
                    acc += d.as_f64() * d.as_f64();
                    *gi = if l > T::zero() { T::lit(2.0) * d } else { T::zero() };
                }
            }
        }
        per.push(acc);
    }
    Ok((per, grad))
}

/// The three batch-mean terms and their weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub recon: f64,
    pub kl: f64,
    pub branch: f64,
    pub total: f64,
}

/// `total = α·recon + kl + λ·branch`.
pub fn total_loss(alpha: f64, lambda: f64, recon: f64, kl: f64, branch: f64) -> LossBreakdown {
    LossBreakdown {
        recon,
        kl,
        branch,
        total: alpha * recon + kl + lambda * branch,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kl_hand_values() {
        let mu = Tensor::from_vec(&[1, 2], vec![0.0f64, 0.0]).unwrap();
        let lv = Tensor::zeros(&[1, 2]);
        assert_eq!(kl_divergence(&mu, &lv), 0.0);
        let mu = Tensor::from_vec(&[1, 2], vec![1.0f64, 0.0]).unwrap();
        assert!((kl_divergence(&mu, &lv) - 0.5).abs() < 1e-15);
    }

    #[test]
    fn mse_of_identical_is_zero() {
        let x = Tensor::from_vec(&[2, 3], vec![0.1f64, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        assert_eq!(reconstruction_loss(&x, &x, ReconMode::Mse).unwrap(), 0.0);
    }

    #[test]
    fn bce_at_half_is_784_ln2() {
        let p = Tensor::full(&[2, 784], 0.5f64);
        let t = Tensor::from_vec(&[2, 784], (0..1568).map(|i| (i % 2) as f64).collect()).unwrap();
        let l = reconstruction_loss(&p, &t, ReconMode::Bce).unwrap();
        assert!((l - 784.0 * 2f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn bce_decreases_toward_target() {
        let t = Tensor::from_vec(&[1, 3], vec![1.0f64, 0.0, 1.0]).unwrap();
        let mut last = f64::INFINITY;
        for s in 1..10 {
            let a = s as f64 / 10.0;
            let p = t.map(|v| 0.5 + (v - 0.5) * a);
            let l = reconstruction_loss(&p, &t, ReconMode::Bce).unwrap();
            assert!(l < last);
            last = l;
        }
    }

    #[test]
    fn bce_clamps_and_counts() {
        let p = Tensor::from_vec(&[1, 2], vec![0.0f64, 1.0]).unwrap();
        let t = Tensor::from_vec(&[1, 2], vec![1.0f64, 0.0]).unwrap();
        let (per, clamped) = reconstruction_per_sample(&p, &t, ReconMode::Bce).unwrap();
        assert_eq!(clamped, 2);
        assert!((per[0] - 2.0 * -(BCE_EPS.ln())).abs() < 1e-6);
    }

    #[test]
    fn logit_form_matches_probability_form() {
        let logits = Tensor::from_vec(&[1, 4], vec![-3.0f64, -0.2, 0.4, 5.0]).unwrap();
        let t = Tensor::from_vec(&[1, 4], vec![0.0, 0.3, 1.0, 0.9]).unwrap();
        let (a, _) = reconstruction_from_logits(&logits, &t, ReconMode::Bce).unwrap();
        let p = logits.map(sigmoid);
        let b = reconstruction_loss(&p, &t, ReconMode::Bce).unwrap();
        assert!((a[0] - b).abs() < 1e-12);
    }

    #[test]
    fn total_is_weighted_sum() {
        let l = total_loss(1.0, 0.0, 10.0, 2.0, 7.0);
        assert_eq!(l.total, 12.0);
        let l = total_loss(0.01, 100.0, 10.0, 2.0, 0.5);
        assert!((l.total - (0.1 + 2.0 + 50.0)).abs() < 1e-12);
        let l2 = total_loss(0.01, 100.0, 10.0, 2.0, 1.0);
        assert!(((l2.total - l.total) - 50.0).abs() < 1e-12);
    }
}
