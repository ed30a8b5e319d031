//! Central finite-difference gradient checking.

use rand::Rng as _;

use super::activation::Activation;
use super::layer::{layer_backward, layer_forward, LayerCache, LayerSpec};
use crate::error::Result;
use crate::rng;
use crate::tensor::Tensor;

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// `(tensor index, element index)` of the worst coordinate.
    pub worst: (usize, usize),
    pub checked: usize,
}

/// Relative error `|a - n| / max(|a|, |n|, 1e-8)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-8)
}

/// Compares `analytic` gradients against central differences of `loss`.
///
/// `loss` is evaluated on a perturbed copy of `params`. With `stride > 1`
/// only every `stride`-th coordinate of each tensor is probed.
pub fn grad_check(
    params: &[Tensor<f64>],
    analytic: &[Tensor<f64>],
    mut loss: impl FnMut(&[Tensor<f64>]) -> f64,
    step: f64,
    stride: usize,
) -> GradCheckReport {
    let mut work = params.to_vec();
    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: (0, 0),
        checked: 0,
    };
    for t in 0..work.len() {
        for i in (0..work[t].len()).step_by(stride.max(1)) {
            let orig = work[t].data()[i];
            work[t].data_mut()[i] = orig + step;
            let up = loss(&work);
            work[t].data_mut()[i] = orig - step;
            let down = loss(&work);
            work[t].data_mut()[i] = orig;
            let numeric = (up - down) / (2.0 * step);
            let err = relative_error(analytic[t].data()[i], numeric);
            report.checked += 1;
            if err > report.max_relative_error {
                report.max_relative_error = err;
                report.worst = (t, i);
            }
        }
    }
    report
}

/// Layer cases covered by [`layer_grad_checks`]: name, spec, per-sample input shape.
pub fn layer_cases() -> Vec<(&'static str, LayerSpec, Vec<usize>)> {
    vec![
        ("dense", LayerSpec::dense(5, 4), vec![5]),
        ("conv2d-s1", LayerSpec::conv(2, 3, 3, 1), vec![5, 5, 2]),
        ("conv2d-s2", LayerSpec::conv(2, 3, 3, 2), vec![6, 6, 2]),
        ("conv2d-transpose-s1", LayerSpec::conv_t(3, 2, 3, 1), vec![4, 4, 3]),
        ("conv2d-transpose-s2", LayerSpec::conv_t(3, 2, 3, 2), vec![3, 3, 3]),
        ("relu", LayerSpec::act(Activation::Relu), vec![7]),
        ("sigmoid", LayerSpec::act(Activation::Sigmoid), vec![7]),
        ("softmax", LayerSpec::act(Activation::Softmax), vec![7]),
        ("linear", LayerSpec::act(Activation::Linear), vec![7]),
        ("flatten", LayerSpec::Flatten, vec![2, 2, 3]),
        ("reshape", LayerSpec::Reshape { shape: vec![2, 2, 3] }, vec![12]),
    ]
}

fn random(shape: &[usize], rng: &mut rng::Rng) -> Tensor<f64> {
    let n = shape.iter().product();
    // magnitudes kept at least 0.05 so no input sits on a ReLU kink
    let data = (0..n)
        .map(|_| {
            let v: f64 = rng.random_range(0.05..0.6);
            if rng.random_bool(0.5) {
                v
            } else {
                -v
            }
        })
        .collect();
    Tensor::from_vec(shape, data).expect("shape matches data")
}

/// Checks parameter and input gradients of one layer on a batch of three
/// samples, using the scalar `sum(y * r)` for a random `r`.
pub fn layer_grad_check(spec: &LayerSpec, input: &[usize], seed: u64) -> Result<GradCheckReport> {
    let mut rng = rng::stream(seed, "grad-check-layer", 0);
    let mut shape = vec![3];
    shape.extend_from_slice(input);
    let x = random(&shape, &mut rng);
    let params: Vec<Tensor<f64>> = spec.param_shapes().iter().map(|s| random(s, &mut rng)).collect();
    let y = layer_forward(spec, &params, &x)?;
    let r = random(y.shape(), &mut rng);
    let cache = match spec {
        LayerSpec::Activation { .. } => LayerCache::Output(y),
        LayerSpec::Flatten | LayerSpec::Reshape { .. } => LayerCache::InputShape(x.shape().to_vec()),
        _ => LayerCache::Input(x.clone()),
    };
    let (gx, mut grads) = layer_backward(spec, &params, Some(&cache), &r)?;
    grads.push(gx);
    let mut all = params;
    all.push(x);
    let np = all.len() - 1;
    Ok(grad_check(
        &all,
        &grads,
        |t| layer_forward(spec, &t[..np], &t[np]).map_or(f64::NAN, |y| y.dot(&r)),
        1e-6,
        1,
    ))
}

/// Runs [`layer_grad_check`] over every case of [`layer_cases`].
pub fn layer_grad_checks(seed: u64) -> Result<Vec<(&'static str, GradCheckReport)>> {
    layer_cases()
        .into_iter()
        .map(|(name, spec, input)| Ok((name, layer_grad_check(&spec, &input, seed)?)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn every_layer_matches_finite_differences() {
        for (name, r) in layer_grad_checks(5).unwrap() {
            assert!(r.max_relative_error < 1e-4, "{name}: {r:?}");
            assert!(r.checked > 0);
        }
    }

    #[test]
    fn quadratic_is_exact() {
        let p = vec![Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap()];
        let g = vec![p[0].map(|v| 2.0 * v)];
        let r = grad_check(&p, &g, |q| q[0].data().iter().map(|v| v * v).sum(), 1e-5, 1);
        assert!(r.max_relative_error < 1e-9);
        assert_eq!(r.checked, 3);
    }

    #[test]
    fn wrong_gradient_detected() {
        let p = vec![Tensor::from_vec(&[1], vec![1.0]).unwrap()];
        let g = vec![Tensor::from_vec(&[1], vec![3.0]).unwrap()];
        let r = grad_check(&p, &g, |q| q[0].data()[0].powi(2), 1e-5, 1);
        assert!(r.max_relative_error > 0.3);
    }
}
