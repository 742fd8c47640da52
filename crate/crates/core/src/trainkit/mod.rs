//! Two-phase optimization, AdamW, the learning-rate schedule and checkpoints.

mod checkpoint;
mod config;
mod optim;
mod train;

pub use checkpoint::{infer_image, load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use config::{ExperimentConfig, TrainConfig};
pub use optim::{adamw_step, lr_at_step, AdamW, OptimizerState};
pub use train::{metrics_csv, train, train_with, EpochMetrics, TrainOutcome, METRICS_HEADER};
