//! AdamW with cosine decay over the joint objective, plus the training loop.

mod optim;
mod trainer;

pub use optim::{clip_grad_norm, cosine_lr, AdamW, AdamWConfig};
pub use trainer::{
    accumulate_batch, holdout_split, read_log_steps, train, train_step, LogRecord, StepStats, TrainConfig,
    TrainOptions, TrainOutcome,
};
