//! The epoch loop and the complete, resumable training state.

use std::path::PathBuf;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::branch::{fit_exact_knn, fit_random_forest, Branch, BranchKind, PROB_FLOOR};
use crate::data::{batch_iter, make_target_set, DataBundle, LabeledDataset, TargetSet};
use crate::error::{BvaeError, Result};
use crate::nn::{AdamState, ParamRef};
use crate::rng::{self, Rng};
use crate::tensor::Tensor;
use crate::vae::{sample_epsilon, LossBreakdown, VaeModel};

use super::config::{TargetMode, TrainConfig};
use super::step::{forward_backward, resolve_target, Objective, StepBatch};

/// Samples used for the fixed per-epoch loss evaluation.
pub const EVAL_SUBSET: usize = 2048;
/// Training codes used to refit exact classifiers each epoch.
pub const EXACT_FIT_SUBSET: usize = 10_000;
/// Test codes scored by the refit exact classifiers.
pub const EXACT_SCORE_SUBSET: usize = 2_000;

/// Accuracy and cross-entropy of a refit exact kNN / forest.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactReport {
    pub accuracy: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean of the per-batch terms, weighted by batch size.
    pub train: LossBreakdown,
    /// Objective on a fixed training subset with fixed noise.
    pub eval: LossBreakdown,
    /// In-batch accuracy of the branch (surrogate) probabilities.
    pub branch_accuracy: Option<f64>,
    pub exact: Option<ExactReport>,
}

/// Everything needed to continue or evaluate a run.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub model: VaeModel<f32>,
    pub branch: Option<Branch<f32>>,
    pub adam: AdamState<f32>,
    /// Stream of the reparameterization noise.
    pub eps_rng: Rng,
    /// Completed epochs.
    pub epoch: usize,
    /// Objective on the evaluation subset before any update.
    pub initial_eval: Option<LossBreakdown>,
    pub history: Vec<EpochRecord>,
}

fn param_refs<'a>(model: &'a mut VaeModel<f32>, branch: Option<&'a mut Branch<f32>>) -> Vec<ParamRef<'a, f32>> {
    let mut refs = model.encoder.param_refs();
    refs.extend(model.decoder.param_refs());
    if let Some(b) = branch {
        refs.extend(b.param_refs());
    }
    refs
}

impl Checkpoint {
    /// Fresh state for `config`.
    pub fn init(config: &TrainConfig) -> Result<Self> {
        let config = config.clone().normalized();
        config.validate()?;
        let mut model = VaeModel::new(config.arch(), config.seed)?;
        let mut branch = match &config.branch {
            Some(kind) => Some(Branch::new(kind.clone(), config.latent_dim, rng::derive_seed(config.seed, "branch", 0))?),
            None => None,
        };
        let shapes: Vec<Vec<usize>> = param_refs(&mut model, branch.as_mut())
            .iter()
            .map(|p| p.value.shape().to_vec())
            .collect();
        Ok(Self {
            adam: AdamState::new(config.adam, &shapes),
            eps_rng: rng::stream(config.seed, "epsilon", 0),
            config,
            model,
            branch,
            epoch: 0,
            initial_eval: None,
            history: Vec::new(),
        })
    }

    pub fn objective(&self) -> Objective {
        Objective {
            alpha: self.config.alpha,
            lambda: self.config.lambda,
            recon: self.config.recon_mode,
        }
    }

    /// Latent means in chunks of 512.
    pub fn encode_means(&self, images: &Tensor<f32>) -> Result<Tensor<f32>> {
        self.model.encode_means(images, 512)
    }
}

/// Knobs that do not influence the result.
#[derive(Clone, Debug, Default)]
pub struct TrainOptions {
    /// Saved after every epoch; on a numeric failure the last completed
    /// epoch is written next to it with a `.last-good` suffix.
    pub checkpoint_path: Option<PathBuf>,
    /// Stop once this many epochs are complete (for split runs).
    pub stop_after: Option<usize>,
}

/// Training split as configured (optionally truncated).
pub fn training_split(config: &TrainConfig, data: &DataBundle) -> LabeledDataset {
    match config.train_samples {
        Some(n) => data.train.head(n),
        None => data.train.clone(),
    }
}

/// Fixed targets built from the full training split.
pub fn targets_for(config: &TrainConfig, data: &DataBundle) -> Result<Option<TargetSet>> {
    match config.target_mode {
        TargetMode::Input => Ok(None),
        TargetMode::Fixed(kind) => Ok(Some(make_target_set(kind, &data.train, config.seed)?)),
    }
}

/// Objective on the first [`EVAL_SUBSET`] training samples, with noise from
/// a dedicated stream so that successive evaluations are comparable.
pub fn evaluate_loss(ck: &Checkpoint, train: &LabeledDataset, targets: Option<&TargetSet>) -> Result<LossBreakdown> {
    let sub = train.head(EVAL_SUBSET);
    let mut model = ck.model.clone();
    let mut branch = ck.branch.clone();
    let mut eps_rng = rng::stream(ck.config.seed, "eval-epsilon", 0);
    let obj = ck.objective();
    let mut acc = LossBreakdown::default();
    let bs = ck.config.batch_size;
    let mut start = 0;
    while start < sub.len() {
        let end = (start + bs).min(sub.len());
        let x = sub.images.slice_rows(start, end);
        let labels = &sub.labels[start..end];
        let target = resolve_target(ck.config.target_mode, &x, labels, targets)?;
        let weights: Vec<f32> = labels.iter().map(|&l| ck.config.class_weights.get(l)).collect();
        let eps = sample_epsilon(&[end - start, ck.config.latent_dim], &mut eps_rng);
        let sb = StepBatch {
            x: &x,
            target: &target,
            labels,
            weights: &weights,
            epsilon: &eps,
        };
        let out = forward_backward(&mut model, branch.as_mut(), &sb, &obj, false)?;
        model.encoder.clear_caches();
        model.decoder.clear_caches();
        accumulate(&mut acc, &out.loss, (end - start) as f64);
        start = end;
    }
    scale(&mut acc, 1.0 / sub.len() as f64);
    Ok(acc)
}

fn accumulate(acc: &mut LossBreakdown, l: &LossBreakdown, w: f64) {
    acc.recon += l.recon * w;
    acc.kl += l.kl * w;
    acc.branch += l.branch * w;
    acc.total += l.total * w;
}

fn scale(acc: &mut LossBreakdown, s: f64) {
    acc.recon *= s;
    acc.kl *= s;
    acc.branch *= s;
    acc.total *= s;
}

/// Refits the exact classifier on frozen training codes and scores it on
/// the first [`EXACT_SCORE_SUBSET`] test samples.
pub fn exact_classifier_report(ck: &Checkpoint, train: &LabeledDataset, test: &LabeledDataset) -> Result<Option<ExactReport>> {
    let Some(kind) = &ck.config.branch else { return Ok(None) };
    if !kind.has_exact_classifier() {
        return Ok(None);
    }
    let fit = train.head(EXACT_FIT_SUBSET);
    let score = test.head(EXACT_SCORE_SUBSET);
    let zf = ck.encode_means(&fit.images)?;
    let zs = ck.encode_means(&score.images)?;
    let probs = match *kind {
        BranchKind::ExactKnn { n } => fit_exact_knn(&zf, &fit.labels, n.min(fit.len()))?.predict_proba(&zs)?,
        BranchKind::RandomForest { n_estimators, max_depth } => {
            let seed = rng::derive_seed(ck.config.seed, "forest", ck.epoch as u64);
            fit_random_forest(&zf, &fit.labels, n_estimators, max_depth, seed)?.predict_proba(&zs)?
        }
        _ => unreachable!("only exact kinds have exact classifiers"),
    };
    let pred = crate::branch::argmax_rows(&probs);
    let accuracy = crate::metrics::accuracy(&score.labels, &pred);
    let loss = (0..score.len())
        .map(|r| -probs.row(r)[score.labels[r] as usize].max(PROB_FLOOR).ln())
        .sum::<f64>()
        / score.len().max(1) as f64;
    Ok(Some(ExactReport { accuracy, loss }))
}

/// One epoch of shuffled mini-batch updates.
fn run_epoch(ck: &mut Checkpoint, train: &LabeledDataset, targets: Option<&TargetSet>) -> Result<(LossBreakdown, Option<f64>)> {
    let cfg = ck.config.clone();
    let obj = ck.objective();
    let shuffle_seed = rng::derive_seed(cfg.seed, "shuffle", 0);
    let mut acc = LossBreakdown::default();
    let mut correct = 0usize;
    for batch in batch_iter(train, cfg.batch_size, shuffle_seed, ck.epoch as u64, cfg.class_weights)? {
        let b = batch.len();
        let target = resolve_target(cfg.target_mode, &batch.images, &batch.labels, targets)?;
        let eps = sample_epsilon(&[b, cfg.latent_dim], &mut ck.eps_rng);
        ck.model.encoder.zero_grads();
        ck.model.decoder.zero_grads();
        if let Some(br) = ck.branch.as_mut() {
            br.zero_grads();
        }
        let sb = StepBatch {
            x: &batch.images,
            target: &target,
            labels: &batch.labels,
            weights: &batch.weights,
            epsilon: &eps,
        };
        let out = forward_backward(&mut ck.model, ck.branch.as_mut(), &sb, &obj, true)?;
        ck.model.encoder.clear_caches();
        ck.model.decoder.clear_caches();
        if let Some(br) = ck.branch.as_mut() {
            br.clear_caches();
        }
        let mut refs = param_refs(&mut ck.model, ck.branch.as_mut());
        ck.adam.update(&mut refs)?;
        if let Some(br) = ck.branch.as_mut() {
            br.observe(&out.z, &batch.labels);
        }
        accumulate(&mut acc, &out.loss, b as f64);
        correct += out.branch_correct.unwrap_or(0);
    }
    scale(&mut acc, 1.0 / train.len() as f64);
    let branch_accuracy = ck.branch.as_ref().map(|_| correct as f64 / train.len() as f64);
    Ok((acc, branch_accuracy))
}

/// Runs the remaining epochs of `ck`.
pub fn continue_training(ck: &mut Checkpoint, data: &DataBundle, opts: &TrainOptions) -> Result<()> {
    let train = training_split(&ck.config, data);
    if train.is_empty() {
        return Err(BvaeError::MissingData("training split is empty".into()));
    }
    let targets = targets_for(&ck.config, data)?;
    if ck.initial_eval.is_none() {
        ck.initial_eval = Some(evaluate_loss(ck, &train, targets.as_ref())?);
    }
    let until = opts.stop_after.map_or(ck.config.epochs, |s| s.min(ck.config.epochs));
    while ck.epoch < until {
        let last_good = opts.checkpoint_path.as_ref().map(|_| ck.clone());
        let started = Instant::now();
        let result = run_epoch(ck, &train, targets.as_ref()).and_then(|(loss, branch_accuracy)| {
            ck.epoch += 1;
            let eval = evaluate_loss(ck, &train, targets.as_ref())?;
            let exact = exact_classifier_report(ck, &train, &data.test)?;
            Ok(EpochRecord {
                epoch: ck.epoch,
                train: loss,
                eval,
                branch_accuracy,
                exact,
            })
        });
        let record = match result {
            Ok(r) => r,
            Err(e) => {
                if let (Some(path), Some(good)) = (&opts.checkpoint_path, last_good) {
                    let mut p = path.clone().into_os_string();
                    p.push(".last-good");
                    if let Err(save_err) = super::checkpoint::save_checkpoint(&good, std::path::Path::new(&p)) {
                        log::error!("could not save last-good checkpoint: {save_err}");
                    } else {
                        log::error!("training failed; last good state saved to {}", PathBuf::from(p).display());
                    }
                }
                return Err(e);
            }
        };
        log::info!(
            "epoch {}/{}: total {:.4} recon {:.4} kl {:.4} branch {:.4} ({:.1}s)",
            record.epoch,
            ck.config.epochs,
            record.train.total,
            record.train.recon,
            record.train.kl,
            record.train.branch,
            started.elapsed().as_secs_f64()
        );
        ck.history.push(record);
        if let Some(path) = &opts.checkpoint_path {
            super::checkpoint::save_checkpoint(ck, path)?;
        }
    }
    Ok(())
}

/// Trains a fresh model for `config`.
pub fn train(config: &TrainConfig, data: &DataBundle, opts: &TrainOptions) -> Result<Checkpoint> {
    let mut ck = Checkpoint::init(config)?;
    continue_training(&mut ck, data, opts)?;
    Ok(ck)
}
