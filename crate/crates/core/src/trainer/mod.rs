//! Batch sampling, the alternating training loop, the final classifier,
//! evaluation and checkpoints.

mod batch;
mod checkpoint;
mod classify;
mod config;
mod objective;
mod train;

pub use batch::{draw_negatives, sample_batch, Batch, StepBatch};
pub use checkpoint::{config_hash, decode_checkpoint, encode_checkpoint, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC};
pub use classify::{
    evaluate, evaluate_czsl, fit_final_classifier, fit_softmax, harmonic_mean, EvalReport, FeatureSpace,
    SoftmaxClassifier,
};
pub use config::{Mode, SamplerKind, TrainConfig};
pub use objective::{evaluate_objective, GradMode, LossTerms, NetBundle, RankSpace, TermMask};
pub use train::{run_pipeline, train, RunOutcome, StepRecord, Trainer};
