//! Training: configuration, the per-batch step, the epoch loop,
//! checkpoints and the latent probe.

pub mod checkpoint;
pub mod config;
pub mod gradcheck;
pub mod probe;
pub mod step;
pub mod trainer;

pub use checkpoint::{checkpoint_bytes, checkpoint_from_bytes, load_checkpoint, save_checkpoint};
pub use config::{TargetMode, TrainConfig};
pub use gradcheck::{end_to_end_grad_check, reduced_arch};
pub use probe::{evaluate, evaluate_probe, probe_report, train_probe, ProbeConfig, ProbeReport};
pub use step::{forward_backward, resolve_target, Objective, StepBatch, StepOutcome};
pub use trainer::{
    continue_training, evaluate_loss, exact_classifier_report, train, training_split, targets_for, Checkpoint,
    EpochRecord, ExactReport, TrainOptions, EVAL_SUBSET, EXACT_FIT_SUBSET, EXACT_SCORE_SUBSET,
};
