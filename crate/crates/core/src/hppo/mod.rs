//! Hybrid-action proximal policy optimization built on hand-written networks.

pub mod adam;
pub mod advantage;
pub mod checkpoint;
pub mod gradcheck;
pub mod mlp;
pub mod policy;
pub mod trainer;

pub use advantage::{n_step_advantage, normalize_advantages};
pub use checkpoint::Checkpoint;
pub use gradcheck::{grad_check, GradCheckReport};
pub use policy::{
    clipped_surrogate, forward_policy, greedy_action, loss_and_grad, sample_hybrid, LossWeights, PolicyOutput, PolicyParameters, Sample,
};
pub use trainer::{train, train_with, update, IterationRecord, RolloutBuffer, TrainConfig, TrainOutput, Transition};
