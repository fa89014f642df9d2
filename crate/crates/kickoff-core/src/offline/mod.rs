//! Offline training: staged imitation losses over chunk batches, centralized
//! value regression, and the epoch loop with metrics and checkpoints.

pub mod loss;
pub mod train;

pub use loss::{
    advantage, advantage_weight, alpha_weights, min_buildin_loss, policy_logits,
    policy_loss_graph, resolve_weights, total_loss, value_loss_graph, weighted_logloss,
    LossBreakdown, LossConfig, StageFlags, TapeLoss,
};
pub use train::{
    mean_designated_buildin_prob, train_offline, train_value, EpochMetrics, Stage, TrainConfig,
    TrainState,
};
