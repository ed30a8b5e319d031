//! Reparameterized sampling of latent codes.

use rand_distr::{Distribution, StandardNormal};

use crate::error::{BvaeError, Result};
use crate::rng::Rng;
use crate::tensor::{Scalar, Tensor};

/// Per-sample `(μ, log σ², ε, z)` for one batch.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentBatch<T = f32> {
    pub mu: Tensor<T>,
    pub log_var: Tensor<T>,
    pub epsilon: Tensor<T>,
    pub z: Tensor<T>,
}

impl<T: Scalar> LatentBatch<T> {
    /// Builds the batch from an explicit ε.
    pub fn new(mu: Tensor<T>, log_var: Tensor<T>, epsilon: Tensor<T>) -> Result<Self> {
        let z = reparameterize(&mu, &log_var, &epsilon)?;
        Ok(Self {
            mu,
            log_var,
            epsilon,
            z,
        })
    }

    /// Draws ε from `rng` and builds the batch.
    pub fn sample(mu: Tensor<T>, log_var: Tensor<T>, rng: &mut Rng) -> Result<Self> {
        let epsilon = sample_epsilon(mu.shape(), rng);
        Self::new(mu, log_var, epsilon)
    }
}

/// Standard-normal noise of the given shape, drawn in row-major order.
pub fn sample_epsilon<T: Scalar>(shape: &[usize], rng: &mut Rng) -> Tensor<T> {
    let n = shape.iter().product();
    let data = (0..n)
        .map(|_| {
            let e: f64 = StandardNormal.sample(rng);
            T::lit(e)
        })
        .collect();
    Tensor::from_vec(shape, data).expect("length matches shape")
}

/// `z = μ + exp(log σ² / 2) ⊙ ε`.
pub fn reparameterize<T: Scalar>(mu: &Tensor<T>, log_var: &Tensor<T>, epsilon: &Tensor<T>) -> Result<Tensor<T>> {
    if mu.shape() != log_var.shape() || mu.shape() != epsilon.shape() {
        return Err(BvaeError::dim(
            "reparameterize",
            format!("mu {:?}, log_var {:?}, epsilon {:?}", mu.shape(), log_var.shape(), epsilon.shape()),
        ));
    }
    let half = T::lit(0.5);
    let data = mu
        .data()
        .iter()
        .zip(log_var.data())
        .zip(epsilon.data())
        .map(|((&m, &lv), &e)| m + (lv * half).exp() * e)
        .collect();
    Tensor::from_vec(mu.shape(), data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream;

    #[test]
    fn zero_noise_gives_mean() {
        let mu = Tensor::from_vec(&[1, 2], vec![0.3f64, -2.0]).unwrap();
        let lv = Tensor::from_vec(&[1, 2], vec![1.0f64, -4.0]).unwrap();
        let z = reparameterize(&mu, &lv, &Tensor::zeros(&[1, 2])).unwrap();
        assert_eq!(z, mu);
    }

    #[test]
    fn unit_sigma_passes_noise() {
        let e = Tensor::from_vec(&[1, 3], vec![0.1f64, -0.7, 2.5]).unwrap();
        let z = reparameterize(&Tensor::zeros(&[1, 3]), &Tensor::zeros(&[1, 3]), &e).unwrap();
        assert_eq!(z, e);
    }

    #[test]
    fn sampled_moments_match() {
        let n = 100_000;
        let (m, lv) = (0.7f64, -0.6f64);
        let mu = Tensor::full(&[n, 1], m);
        let log_var = Tensor::full(&[n, 1], lv);
        let lb = LatentBatch::sample(mu, log_var, &mut stream(5, "eps", 0)).unwrap();
        let mean = lb.z.data().iter().sum::<f64>() / n as f64;
        let var = lb.z.data().iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let sigma2 = lv.exp();
        assert!((mean - m).abs() < 3.0 * (sigma2 / n as f64).sqrt());
        // standard error of the sample variance is σ²·sqrt(2/(n-1))
        assert!((var - sigma2).abs() < 3.0 * sigma2 * (2.0 / (n - 1) as f64).sqrt());
    }
}
