//! Finite-difference check of the full objective on a reduced model.

use rand::Rng as _;

use crate::branch::{Branch, BranchKind};
use crate::error::Result;
use crate::nn::{grad_check, GradCheckReport};
use crate::rng;
use crate::tensor::Tensor;
use crate::vae::{sample_epsilon, OutputActivation, ReconMode, VaeArch, VaeModel};

use super::step::{forward_backward, Objective, StepBatch};

/// 4×4 images, 2 and 3 conv filters, 5 hidden units, k = 2.
pub fn reduced_arch(recon: ReconMode) -> VaeArch {
    VaeArch {
        height: 4,
        width: 4,
        conv_filters: [2, 3],
        hidden: 5,
        latent_dim: 2,
        output: match recon {
            ReconMode::Bce => OutputActivation::Sigmoid,
            ReconMode::Mse => OutputActivation::Relu,
        },
    }
}

fn params(model: &VaeModel<f64>, branch: Option<&Branch<f64>>) -> Vec<Tensor<f64>> {
    let mut v: Vec<Tensor<f64>> = model.encoder.params().chain(model.decoder.params()).cloned().collect();
    if let Some(h) = branch.and_then(|b| b.head.as_ref()) {
        v.extend(h.params().cloned());
    }
    v
}

fn grads(model: &VaeModel<f64>, branch: Option<&Branch<f64>>) -> Vec<Tensor<f64>> {
    let mut v: Vec<Tensor<f64>> = model.encoder.grads().chain(model.decoder.grads()).cloned().collect();
    if let Some(h) = branch.and_then(|b| b.head.as_ref()) {
        v.extend(h.grads().cloned());
    }
    v
}

fn set_params(model: &mut VaeModel<f64>, branch: Option<&mut Branch<f64>>, values: &[Tensor<f64>]) {
    let mut it = values.iter();
    for p in model.encoder.params_mut().chain(model.decoder.params_mut()) {
        *p = it.next().expect("parameter count").clone();
    }
    if let Some(h) = branch.and_then(|b| b.head.as_mut()) {
        for p in h.params_mut() {
            *p = it.next().expect("parameter count").clone();
        }
    }
}

/// Compares the analytic gradient of `α·recon + KL + λ·branch` (with
/// non-uniform sample weights) against central differences, over every
/// encoder, decoder and branch-head parameter, in 64-bit.
///
/// Class-mean centroids are seeded before the check and held fixed.
pub fn end_to_end_grad_check(kind: Option<BranchKind>, recon: ReconMode, seed: u64) -> Result<GradCheckReport> {
    let b = 6;
    let mut model = VaeModel::<f64>::new(reduced_arch(recon), seed)?;
    // zero biases put ReLU inputs exactly on the kink; move off it
    let mut r = rng::stream(seed, "grad-check-bias", 0);
    for p in model.encoder.params_mut().chain(model.decoder.params_mut()) {
        if p.ndim() == 1 {
            p.data_mut().iter_mut().for_each(|v| *v = r.random_range(-0.2..0.2));
        }
    }
    let mut branch = match kind {
        Some(k) => Some(Branch::<f64>::new(k, 2, rng::derive_seed(seed, "branch", 0))?),
        None => None,
    };
    let x = Tensor::from_vec(
        &[b, 4, 4, 1],
        (0..b * 16).map(|i| ((i * 7919 + seed as usize) % 97) as f64 / 97.0).collect(),
    )?;
    let labels: Vec<u8> = (0..b).map(|i| (i % 3) as u8).collect();
    let weights = [1.0, 2.0, 0.5, 1.0, 1.5, 1.0];
    let eps = sample_epsilon(&[b, 2], &mut rng::stream(seed, "epsilon", 0));
    let batch = StepBatch {
        x: &x,
        target: &x,
        labels: &labels,
        weights: &weights,
        epsilon: &eps,
    };
    let obj = Objective {
        alpha: 0.7,
        lambda: if branch.is_some() { 2.0 } else { 0.0 },
        recon,
    };
    forward_backward(&mut model.clone(), branch.as_mut(), &batch, &obj, false)?;
    model.encoder.zero_grads();
    model.decoder.zero_grads();
    if let Some(br) = branch.as_mut() {
        br.zero_grads();
    }
    forward_backward(&mut model, branch.as_mut(), &batch, &obj, true)?;
    let p = params(&model, branch.as_ref());
    let g = grads(&model, branch.as_ref());
    let n_vae = model.encoder.params().count() + model.decoder.params().count();
    let loss = |vals: &[Tensor<f64>]| {
        let mut m = model.clone();
        let mut br = branch.clone();
        set_params(&mut m, br.as_mut(), vals);
        forward_backward(&mut m, br.as_mut(), &batch, &obj, false)
            .map(|o| o.loss.total)
            .unwrap_or(f64::NAN)
    };
    // every encoder/decoder element; a strided sample of the (large) head
    let vae = grad_check(&p[..n_vae], &g[..n_vae], |v| loss(&[v, &p[n_vae..]].concat()), 1e-5, 1);
    if n_vae == p.len() {
        return Ok(vae);
    }
    let head_len: usize = p[n_vae..].iter().map(|t| t.len()).sum();
    let stride = (head_len / 2000).max(1);
    let head = grad_check(&p[n_vae..], &g[n_vae..], |v| loss(&[&p[..n_vae], v].concat()), 1e-5, stride);
    Ok(if head.max_relative_error > vae.max_relative_error {
        GradCheckReport {
            worst: (head.worst.0 + n_vae, head.worst.1),
            checked: vae.checked + head.checked,
            ..head
        }
    } else {
        GradCheckReport {
            checked: vae.checked + head.checked,
            ..vae
        }
    })
}
