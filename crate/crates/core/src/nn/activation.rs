use serde::{Deserialize, Serialize};

use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    Relu,
    Sigmoid,
    /// Over the last axis.
    Softmax,
    Linear,
}

#[inline]
pub fn sigmoid<T: Scalar>(x: T) -> T {
    if x >= T::zero() {
        T::one() / (T::one() + (-x).exp())
    } else {
        let e = x.exp();
        e / (T::one() + e)
    }
}

/// Numerically stable softmax of one row, written into `out`.
pub fn softmax_row<T: Scalar>(row: &[T], out: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for (o, &v) in out.iter_mut().zip(row) {
        *o = (v - max).exp();
        sum += *o;
    }
    for o in out.iter_mut() {
        *o /= sum;
    }
}

pub fn activation<T: Scalar>(kind: Activation, x: &Tensor<T>) -> Tensor<T> {
    match kind {
        Activation::Relu => x.map(|v| v.max(T::zero())),
        Activation::Sigmoid => x.map(sigmoid),
        Activation::Linear => x.clone(),
        Activation::Softmax => {
            let width = *x.shape().last().unwrap_or(&1);
            let mut out = x.clone();
            for (src, dst) in x.data().chunks(width).zip(out.data_mut().chunks_mut(width)) {
                softmax_row(src, dst);
            }
            out
        }
    }
}

/// Gradient w.r.t. the activation input given its forward output.
pub fn activation_backward<T: Scalar>(
    kind: Activation,
    output: &Tensor<T>,
    grad_out: &Tensor<T>,
) -> Tensor<T> {
    let mut g = grad_out.clone();
    match kind {
        Activation::Linear => {}
        Activation::Relu => {
            for (gi, &y) in g.data_mut().iter_mut().zip(output.data()) {
                if y <= T::zero() {
                    *gi = T::zero();
                }
            }
        }
        Activation::Sigmoid => {
            for (gi, &y) in g.data_mut().iter_mut().zip(output.data()) {
                *gi *= y * (T::one() - y);
            }
        }
        Activation::Softmax => {
            let width = *output.shape().last().unwrap_or(&1);
            for (gr, yr) in g.data_mut().chunks_mut(width).zip(output.data().chunks(width)) {
                let dot: T = gr.iter().zip(yr).map(|(&a, &b)| a * b).sum();
                for (gi, &y) in gr.iter_mut().zip(yr) {
                    *gi = y * (*gi - dot);
                }
            }
        }
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scalar_values() {
        let x = Tensor::from_vec(&[2], vec![-1.0f64, 2.0]).unwrap();
        assert_eq!(activation(Activation::Relu, &x).data(), &[0.0, 2.0]);
        assert_eq!(sigmoid(0.0f64), 0.5);
        assert!(sigmoid(-800.0f64).is_finite() && sigmoid(800.0f64) == 1.0);
    }

    #[test]
    fn softmax_equal_logits_uniform() {
        let x = Tensor::full(&[3, 10], 1.25f64);
        let y = activation(Activation::Softmax, &x);
        for v in y.data() {
            assert!((v - 0.1).abs() < 1e-15);
        }
    }

    #[test]
    fn linear_backward_passes_gradient() {
        let y = Tensor::from_vec(&[3], vec![1.0f64, -2.0, 3.0]).unwrap();
        let g = Tensor::from_vec(&[3], vec![0.5, 0.25, -1.0]).unwrap();
        assert_eq!(activation_backward(Activation::Linear, &y, &g), g);
    }
}
