//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use super::layer::ParamRef;
use crate::error::{BvaeError, Result};
use crate::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
        }
    }
}

/// Moment accumulators, one pair per parameter tensor in a fixed order.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub config: AdamConfig,
    pub step: u64,
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(config: AdamConfig, shapes: &[Vec<usize>]) -> Self {
        Self {
            config,
            step: 0,
            m: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
            v: shapes.iter().map(|s| Tensor::zeros(s)).collect(),
        }
    }

    /// One update over `params`, which must be presented in the same order
    /// every call. Nothing is modified if any gradient is non-finite.
    pub fn update(&mut self, params: &mut [ParamRef<'_, T>]) -> Result<()> {
        if params.len() != self.m.len() {
            return Err(BvaeError::dim(
                "adam",
                format!("{} parameters but state holds {}", params.len(), self.m.len()),
            ));
        }
        for (p, m) in params.iter().zip(&self.m) {
            if p.value.shape() != m.shape() || p.grad.shape() != m.shape() {
                return Err(BvaeError::dim(
                    "adam",
                    format!("parameter {} shape {:?} vs moments {:?}", p.name, p.value.shape(), m.shape()),
                ));
            }
            if let Some(i) = p.grad.data().iter().position(|g| !g.is_finite()) {
                return Err(BvaeError::NonFinite(format!(
                    "gradient of {} at element {i} ({:?})",
                    p.name,
                    p.grad.data()[i]
                )));
            }
        }
        self.step += 1;
        let c = self.config;
        let t = self.step as i32;
        let b1 = T::lit(c.beta1);
        let b2 = T::lit(c.beta2);
        let one_b1 = T::lit(1.0 - c.beta1);
        let one_b2 = T::lit(1.0 - c.beta2);
        let corr1 = T::lit(1.0 - c.beta1.powi(t));
        let corr2 = T::lit(1.0 - c.beta2.powi(t));
        let lr = T::lit(c.lr);
        let eps = T::lit(c.eps);
        for ((p, m), v) in params.iter_mut().zip(&mut self.m).zip(&mut self.v) {
            let g = p.grad.data();
            let (w, md, vd) = (p.value.data_mut(), m.data_mut(), v.data_mut());
            for i in 0..w.len() {
                md[i] = b1 * md[i] + one_b1 * g[i];
                vd[i] = b2 * vd[i] + one_b2 * g[i] * g[i];
                let m_hat = md[i] / corr1;
                let v_hat = vd[i] / corr2;
                w[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Functional form: applies one Adam step to `params` given `grads`.
pub fn adam_step<T: Scalar>(
    params: &mut [Tensor<T>],
    grads: &[Tensor<T>],
    state: &mut AdamState<T>,
) -> Result<()> {
    if params.len() != grads.len() {
        return Err(BvaeError::dim("adam", "params and grads differ in count"));
    }
    let mut refs: Vec<ParamRef<'_, T>> = params
        .iter_mut()
        .zip(grads)
        .enumerate()
        .map(|(i, (value, grad))| ParamRef {
            name: format!("param[{i}]"),
            value,
            grad,
        })
        .collect();
    state.update(&mut refs)
}
