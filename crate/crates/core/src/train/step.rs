//! One forward/backward pass of the branched objective.

use crate::branch::Branch;
use crate::data::TargetSet;
use crate::error::{BvaeError, Result};
use crate::tensor::{Scalar, Tensor};
use crate::vae::{
    join_heads, kl_per_sample, reconstruction_from_logits, reparameterize, split_heads, total_loss, LossBreakdown,
    ReconMode, VaeModel, LOG_VAR_CLAMP,
};

use super::config::TargetMode;

/// Decoder target for a batch: the input itself or the fixed image of each
/// sample's class.
pub fn resolve_target<T: Scalar>(
    mode: TargetMode,
    x: &Tensor<T>,
    labels: &[u8],
    targets: Option<&TargetSet>,
) -> Result<Tensor<T>> {
    match mode {
        TargetMode::Input => Ok(x.clone()),
        TargetMode::Fixed(kind) => {
            let set = targets
                .ok_or_else(|| BvaeError::Config(format!("fixed {kind} target mode needs a target set")))?;
            let idx: Vec<usize> = labels.iter().map(|&l| l as usize).collect();
            let t = set.targets.gather_rows(&idx).cast();
            if t.shape() != x.shape() {
                return Err(BvaeError::dim("resolve_target", format!("targets {:?} vs inputs {:?}", t.shape(), x.shape())));
            }
            Ok(t)
        }
    }
}

/// Inputs of one step.
pub struct StepBatch<'a, T> {
    pub x: &'a Tensor<T>,
    pub target: &'a Tensor<T>,
    pub labels: &'a [u8],
    pub weights: &'a [T],
    pub epsilon: &'a Tensor<T>,
}

/// Scalars of the objective.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Objective {
    pub alpha: f64,
    pub lambda: f64,
    pub recon: ReconMode,
}

/// Results of one pass.
pub struct StepOutcome<T> {
    pub loss: LossBreakdown,
    pub z: Tensor<T>,
    /// In-batch accuracy of the branch's probabilities, when present.
    pub branch_correct: Option<usize>,
}

/// Evaluates the objective on a batch; when `backward` is set, accumulates
/// gradients into the model (and branch head) layers.
///
/// Every sample's loss `w_b·(α·recon_b + kl_b + λ·CE_b)` is averaged over
/// the batch; the reported terms are the weighted batch means.
pub fn forward_backward<T: Scalar>(
    model: &mut VaeModel<T>,
    mut branch: Option<&mut Branch<T>>,
    batch: &StepBatch<'_, T>,
    obj: &Objective,
    backward: bool,
) -> Result<StepOutcome<T>> {
    let b = batch.x.rows();
    let k = model.latent_dim();
    if batch.weights.len() != b || batch.labels.len() != b {
        return Err(BvaeError::dim("training step", format!("{b} inputs, {} labels, {} weights", batch.labels.len(), batch.weights.len())));
    }
    let heads = model.encoder.forward(batch.x.clone())?;
    let (mu, lv_raw) = split_heads(&heads, k);
    let lv = crate::vae::clamp_log_var(&lv_raw);
    let z = reparameterize(&mu, &lv, batch.epsilon)?;
    let logits = model.decoder.forward(z.clone())?;
    let (recon_per, g_logits) = reconstruction_from_logits(&logits, batch.target, obj.recon)?;
    let kl_per = kl_per_sample(&mu, &lv);

    let w: Vec<f64> = batch.weights.iter().map(|v| v.as_f64()).collect();
    let inv_b = 1.0 / b as f64;
    let wmean = |per: &[f64]| per.iter().zip(&w).map(|(l, w)| l * w).sum::<f64>() * inv_b;
    let recon = wmean(&recon_per);
    let kl = wmean(&kl_per);

    let mut branch_term = 0.0;
    let mut branch_correct = None;
    let mut gz_branch = None;
    // a lone sample has no neighbours to vote
    let lone = b < 2 && matches!(branch.as_deref().map(|br| br.kind.surrogate()), Some(crate::branch::Surrogate::SoftKnn { .. }));
    if let Some(br) = branch.as_deref_mut().filter(|_| !lone) {
        let out = br.forward_capped(&z, batch.labels, b.saturating_sub(1))?;
        branch_term = wmean(&out.per_sample);
        branch_correct = Some(
            crate::branch::argmax_rows(&out.probs)
                .iter()
                .zip(batch.labels)
                .filter(|(p, l)| p == l)
                .count(),
        );
        if backward && obj.lambda > 0.0 {
            let lw: Vec<T> = w.iter().map(|&wb| T::lit(wb * obj.lambda)).collect();
            gz_branch = Some(br.loss(&out, &lw)?.1);
        }
    }
    let loss = total_loss(obj.alpha, obj.lambda, recon, kl, branch_term);
    if !loss.total.is_finite() {
        return Err(BvaeError::NonFinite(format!(
            "loss is not finite (recon {}, kl {}, branch {})",
            loss.recon, loss.kl, loss.branch
        )));
    }
    if !backward {
        return Ok(StepOutcome { loss, z, branch_correct });
    }

    let mut g_logits = g_logits;
    for r in 0..b {
        let s = T::lit(obj.alpha * w[r] * inv_b);
        g_logits.row_mut(r).iter_mut().for_each(|g| *g *= s);
    }
    let mut gz = model.decoder.backward(&g_logits)?;
    if let Some(g) = gz_branch {
        gz.add_assign(&g);
    }
    let half = T::lit(0.5);
    let clamp = T::lit(LOG_VAR_CLAMP as f64);
    let mut g_mu = Tensor::zeros(&[b, k]);
    let mut g_lv = Tensor::zeros(&[b, k]);
    for r in 0..b {
        let s = T::lit(w[r] * inv_b);
        for j in 0..k {
            let i = r * k + j;
            let (m, l, e, raw) = (mu.data()[i], lv.data()[i], batch.epsilon.data()[i], lv_raw.data()[i]);
            let sigma = (l * half).exp();
            let gzi = gz.data()[i];
            g_mu.data_mut()[i] = gzi + s * m;
            let g = gzi * half * sigma * e + s * half * (l.exp() - T::one());
            g_lv.data_mut()[i] = if raw < -clamp || raw > clamp { T::zero() } else { g };
        }
    }
    model.encoder.backward(&join_heads(&g_mu, &g_lv))?;
    Ok(StepOutcome { loss, z, branch_correct })
}
