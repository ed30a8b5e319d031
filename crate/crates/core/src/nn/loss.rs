//! Softmax cross-entropy with per-sample weights.

use crate::error::{BvaeError, Result};
use crate::tensor::{Scalar, Tensor};

/// Per-row log-softmax.
pub fn log_softmax_rows<T: Scalar>(logits: &Tensor<T>) -> Tensor<T> {
    let width = logits.row_len();
    let mut out = logits.clone();
    for row in out.data_mut().chunks_mut(width) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let lse = max + row.iter().map(|&v| (v - max).exp()).sum::<T>().ln();
        row.iter_mut().for_each(|v| *v -= lse);
    }
    out
}

/// Weighted categorical cross-entropy over softmax probabilities.
///
/// Returns `mean_b w_b * (-sum_k y_bk log p_bk)` and its gradient w.r.t. the
/// logits, `w_b * (p_b - y_b) / B`.
pub fn softmax_cross_entropy<T: Scalar>(
    logits: &Tensor<T>,
    labels: &Tensor<T>,
    sample_weights: &[T],
) -> Result<(f64, Tensor<T>)> {
    let (b, k) = match *logits.shape() {
        [b, k] => (b, k),
        ref s => return Err(BvaeError::dim("softmax_cross_entropy", format!("logits {s:?}"))),
    };
    if labels.shape() != logits.shape() || sample_weights.len() != b {
        return Err(BvaeError::dim(
            "softmax_cross_entropy",
            format!(
                "labels {:?} / weights {} vs logits {:?}",
                labels.shape(),
                sample_weights.len(),
                logits.shape()
            ),
        ));
    }
    let logp = log_softmax_rows(logits);
    let mut grad = Tensor::zeros(&[b, k]);
    let inv_b = T::one() / T::lit(b as f64);
    let mut total = 0.0;
    for r in 0..b {
        let y = labels.row(r);
        if y.iter().all(|&v| v == T::zero()) {
            return Err(BvaeError::Validation(format!("row {r} has no label")));
        }
        let w = sample_weights[r];
        if !(w >= T::zero()) || !w.is_finite() {
            return Err(BvaeError::Validation(format!("row {r} has invalid weight {w:?}")));
        }
        let lp = logp.row(r);
        let ce: f64 = -y.iter().zip(lp).map(|(&yk, &l)| (yk * l).as_f64()).sum::<f64>();
        total += w.as_f64() * ce;
        let ysum: T = y.iter().copied().sum();
        for ((g, &l), &yk) in grad.row_mut(r).iter_mut().zip(lp).zip(y) {
            *g = w * (l.exp() * ysum - yk) * inv_b;
        }
    }
    Ok((total / b as f64, grad))
}

pub fn one_hot<T: Scalar>(labels: &[u8], classes: usize) -> Tensor<T> {
    let mut t = Tensor::zeros(&[labels.len(), classes]);
    for (r, &l) in labels.iter().enumerate() {
        t.row_mut(r)[l as usize] = T::one();
    }
    t
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn confident_correct_prediction_costs_nothing() {
        let logits = Tensor::from_vec(&[1, 3], vec![0.0f64, 1000.0, 0.0]).unwrap();
        let y = one_hot::<f64>(&[1], 3);
        let (l, g) = softmax_cross_entropy(&logits, &y, &[1.0]).unwrap();
        assert!(l.abs() < 1e-12);
        assert!(g.data().iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn uniform_prediction_costs_ln10() {
        let logits = Tensor::zeros(&[4, 10]);
        let y = one_hot::<f64>(&[0, 3, 7, 9], 10);
        let (l, _) = softmax_cross_entropy(&logits, &y, &[1.0; 4]).unwrap();
        assert!((l - 10f64.ln()).abs() < 1e-12);
        let (l2, _) = softmax_cross_entropy(&logits, &y, &[2.5; 4]).unwrap();
        assert!((l2 - 2.5 * 10f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn empty_label_row_rejected() {
        let logits = Tensor::<f64>::zeros(&[2, 3]);
        let mut y = one_hot::<f64>(&[0, 1], 3);
        y.row_mut(1).fill(0.0);
        assert!(matches!(
            softmax_cross_entropy(&logits, &y, &[1.0, 1.0]),
            Err(BvaeError::Validation(_))
        ));
    }
}
