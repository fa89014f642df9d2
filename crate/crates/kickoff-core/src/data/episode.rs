//! Episode records: one recorded team's observations, action labels, shared
//! rewards, and the designated-player index per step.

use crate::env::PitchConfig;

/// One recorded self-play episode. Arrays are time-major: `obs` is
/// `[T, n, obs_dim]`, `labels` and `designated` run over the same `T` steps.
/// The designated player's label is the expert action it executed; every
/// other player is labeled BUILD_IN regardless of the scripted action that
/// actually ran.
#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeRecord {
    pub config_hash: u64,
    pub seed: u64,
    pub n: usize,
    pub obs_dim: usize,
    pub obs: Vec<f64>,
    pub labels: Vec<u8>,
    pub rewards: Vec<f64>,
    pub designated: Vec<u8>,
}

impl EpisodeRecord {
    pub fn len(&self) -> usize {
        self.rewards.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rewards.is_empty()
    }

    /// All n agents' observations at step `t`, concatenated.
    pub fn obs_at(&self, t: usize) -> &[f64] {
        let w = self.n * self.obs_dim;
        &self.obs[t * w..(t + 1) * w]
    }

    pub fn labels_at(&self, t: usize) -> &[u8] {
        &self.labels[t * self.n..(t + 1) * self.n]
    }
}

/// Undiscounted cumulative reward R(τ) over the whole episode.
pub fn episode_return(episode: &EpisodeRecord) -> f64 {
    episode.rewards.iter().sum()
}

/// Two-level trajectory weight: ρ1 for returns at or above the threshold,
/// ρ0 below it.
pub fn trajectory_weight(ret: f64, rho0: f64, rho1: f64, r_threshold: f64) -> f64 {
    if ret >= r_threshold {
        rho1
    } else {
        rho0
    }
}

/// FNV-1a hash over every configuration field except the seed, so episodes
/// collected from the same scenario template share a hash across seeds.
pub fn config_hash(config: &PitchConfig) -> u64 {
    let mut bytes = Vec::with_capacity(64);
    bytes.extend_from_slice(&config.width.to_le_bytes());
    bytes.extend_from_slice(&config.height.to_le_bytes());
    bytes.extend_from_slice(&(config.players_per_team as u32).to_le_bytes());
    bytes.extend_from_slice(&(config.opponents as u32).to_le_bytes());
    bytes.extend_from_slice(&(config.layout_players as u32).to_le_bytes());
    bytes.extend_from_slice(&config.episode_len.to_le_bytes());
    bytes.extend_from_slice(&config.action_noise.to_le_bytes());
    bytes.push(match config.spawn {
        crate::env::SpawnPlan::FullGame => 0,
        crate::env::SpawnPlan::CounterAttack => 1,
        crate::env::SpawnPlan::ThreeVsOne => 2,
    });
    bytes.push(config.buildin_allowed as u8);
    bytes.push(config.terminate_on_goal as u8);

    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn record(rewards: Vec<f64>) -> EpisodeRecord {
        let t = rewards.len();
        EpisodeRecord {
            config_hash: 0,
            seed: 0,
            n: 1,
            obs_dim: 1,
            obs: vec![0.0; t],
            labels: vec![0; t],
            rewards,
            designated: vec![0; t],
        }
    }

    #[test]
    fn return_is_the_reward_sum() {
        assert_eq!(episode_return(&record(vec![0.0; 5])), 0.0);
        assert_eq!(episode_return(&record(vec![0.0, 0.0, 1.0, 0.0, -1.0, 1.0])), 1.0);
    }

    #[test]
    fn weight_boundary_is_inclusive() {
        assert_eq!(trajectory_weight(3.0, 0.0, 1.0, 3.0), 1.0);
        assert_eq!(trajectory_weight(2.999, 0.0, 1.0, 3.0), 0.0);
        assert_eq!(trajectory_weight(10.0, 0.2, 0.9, 3.0), 0.9);
        assert_eq!(trajectory_weight(-4.0, 0.2, 0.9, 3.0), 0.2);
    }

    #[test]
    fn hash_ignores_seed_but_not_shape() {
        let a = PitchConfig::full_game(4, 1);
        let b = PitchConfig::full_game(4, 99);
        assert_eq!(config_hash(&a), config_hash(&b));
        let c = PitchConfig::full_game(3, 1);
        assert_ne!(config_hash(&a), config_hash(&c));
        let d = PitchConfig::academy("counter_attack", 1).unwrap();
        assert_ne!(config_hash(&a), config_hash(&d));
    }

    proptest! {
        #[test]
        fn return_matches_fold_oracle(rewards in proptest::collection::vec(-2.0f64..2.0, 0..64)) {
            let oracle = rewards.iter().fold(0.0, |acc, r| acc + r);
            prop_assert_eq!(episode_return(&record(rewards)), oracle);
        }
    }
}
