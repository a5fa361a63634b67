//! Residual PPO: networks, advantage estimation, updates, checkpoints and
//! the training loop.

mod checkpoint;
mod gae;
pub mod nn;
mod normalize;
mod policy;
mod ppo;
mod train;

pub use checkpoint::{read_checkpoint, write_checkpoint, TrainerState};
pub use gae::compute_gae;
pub use normalize::ObsNormalizer;
pub use policy::{
    compose_residual, forward_policy, gaussian_entropy, gaussian_log_prob, sample_action, Policy, PolicyOutput,
    LOG_STD_RANGE,
};
pub use ppo::{loss_and_grad, ppo_update, Adam, Grads, LossParts, Minibatch, PpoConfig, TrainBatch, UpdateStats};

pub use train::{
    derive_seed, eval_seed, rollout, ActionMap, IterationLog, PolicyKind, RolloutMode, TrainConfig, TrainError, Trainer,
    LOG_HEADER,
};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum LearnError {
    #[error("observation has {got} entries, network expects {expected}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("sequence lengths differ")]
    LengthMismatch,
    #[error("loss became non-finite; update discarded")]
    NonFiniteLoss,
    #[error("recorded actions cover {got} steps, episode needs {needed}")]
    RecordingLengthMismatch { needed: usize, got: usize },
}
