//! Sequential mini-batch policy-gradient training and policy evaluation.

mod config;
mod evaluate;
mod objective;
mod sampler;
mod train;

pub use config::{TrainConfig, TrainHistory, DEFAULT_GRAD_CLIP};
pub use evaluate::{evaluate, PolicyStrategy};
pub use objective::{build_batch_objective, BatchObjective};
pub use sampler::sample_sequential_batch;
pub use train::{train, train_step, train_with, training_range, StepReport};
