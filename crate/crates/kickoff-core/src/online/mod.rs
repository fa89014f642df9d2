//! Online fine-tuning: PPO over pooled env rollouts, warm-started from an
//! offline checkpoint with the action head re-initialized.

mod finetune;
mod gae;
mod load;
mod ppo;
mod rollout;

pub use finetune::{eval_greedy, run_finetune, steps_to_win_rate, FinetuneOutcome, FinetunePoint};
pub use gae::{gae, normalize_advantages, ValueNormalizer};
pub use load::load_pretrained_except_last;
pub use ppo::{ppo_chunk_graph, FinetuneConfig, InitMode, PpoGraph, PpoMetrics, PpoTrainer};
pub use rollout::{EnvPool, RolloutBatch};
