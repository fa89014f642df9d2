//! Pitch configuration and scenario presets.

use crate::env::action::{N_ACTIONS_ACADEMY, N_ACTIONS_FULL};
use crate::{Error, Result};

/// How players and the ball are placed at reset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpawnPlan {
    /// Kickoff formation, team A puts the ball in play at the center.
    FullGame,
    /// Advanced attackers against a lone defender, ball already with us.
    CounterAttack,
    /// Three attackers at the edge of the box against one defender.
    ThreeVsOne,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PitchConfig {
    pub width: i32,
    pub height: i32,
    /// Controlled players per team, goalkeeper excluded.
    pub players_per_team: usize,
    /// Opposing outfield players; equals players_per_team for full games.
    pub opponents: usize,
    /// Per-team player slots in the observation layout. Fixing this across
    /// scenarios keeps observation dimensions transfer-compatible.
    pub layout_players: usize,
    pub episode_len: u32,
    /// Probability that a movement action is replaced by a uniformly random
    /// movement direction.
    pub action_noise: f64,
    pub seed: u64,
    pub spawn: SpawnPlan,
    /// Whether BUILD_IN is a legal action (full game yes, academy no).
    pub buildin_allowed: bool,
    /// Academy scenarios end as soon as either side scores.
    pub terminate_on_goal: bool,
}

pub const EPISODE_LEN_EVAL: u32 = 3_000;
pub const EPISODE_LEN_TRAIN: u32 = 1_500;

impl PitchConfig {
    /// Full-game default: evaluation-length episodes.
    pub fn full_game(players_per_team: usize, seed: u64) -> PitchConfig {
        PitchConfig {
            width: 16,
            height: 11,
            players_per_team,
            opponents: players_per_team,
            layout_players: players_per_team,
            episode_len: EPISODE_LEN_EVAL,
            action_noise: 0.05,
            seed,
            spawn: SpawnPlan::FullGame,
            buildin_allowed: true,
            terminate_on_goal: false,
        }
    }

    /// Full-game config with the training episode length.
    pub fn full_game_train(players_per_team: usize, seed: u64) -> PitchConfig {
        PitchConfig {
            episode_len: EPISODE_LEN_TRAIN,
            ..PitchConfig::full_game(players_per_team, seed)
        }
    }

    /// Academy preset by name. Layout stays at 4 player slots per team so
    /// checkpoints pretrained on the 4v4 full game remain shape-compatible.
    pub fn academy(name: &str, seed: u64) -> Result<PitchConfig> {
        let (spawn, players, opponents) = match name {
            "counter_attack" => (SpawnPlan::CounterAttack, 2, 1),
            "three_vs_one" => (SpawnPlan::ThreeVsOne, 3, 1),
            other => {
                return Err(Error::invalid(format!(
                    "unknown academy scenario '{other}' (expected counter_attack or three_vs_one)"
                )))
            }
        };
        Ok(PitchConfig {
            width: 16,
            height: 11,
            players_per_team: players,
            opponents,
            layout_players: 4,
            episode_len: 100,
            action_noise: 0.05,
            seed,
            spawn,
            buildin_allowed: false,
            terminate_on_goal: true,
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.width < 8 {
            return Err(Error::invalid(format!("width {} < 8", self.width)));
        }
        if self.height < 5 {
            return Err(Error::invalid(format!("height {} < 5", self.height)));
        }
        if self.players_per_team < 1 || self.players_per_team > 11 {
            return Err(Error::invalid(format!(
                "players_per_team {} outside 1..=11",
                self.players_per_team
            )));
        }
        if self.opponents > 11 {
            return Err(Error::invalid(format!("opponents {} > 11", self.opponents)));
        }
        if self.layout_players < self.players_per_team.max(self.opponents) {
            return Err(Error::invalid(format!(
                "layout_players {} smaller than largest team {}",
                self.layout_players,
                self.players_per_team.max(self.opponents)
            )));
        }
        if self.layout_players > 11 {
            return Err(Error::invalid(format!("layout_players {} > 11", self.layout_players)));
        }
        if !(self.action_noise >= 0.0 && self.action_noise < 1.0) {
            return Err(Error::invalid(format!(
                "action_noise {} outside [0, 1)",
                self.action_noise
            )));
        }
        if self.episode_len == 0 {
            return Err(Error::invalid("episode_len must be positive".to_string()));
        }
        Ok(())
    }

    pub fn n_actions(&self) -> usize {
        if self.buildin_allowed {
            N_ACTIONS_FULL
        } else {
            N_ACTIONS_ACADEMY
        }
    }

    /// Goal mouth rows: the band of cells on the goal line that score.
    pub fn goal_band(&self) -> (i32, i32) {
        let mid = self.height / 2;
        let half = (self.height / 5).max(1);
        (mid - half, mid + half)
    }

    pub fn keeper_row(&self) -> i32 {
        self.height / 2
    }

    /// Maximum distance (Euclidean, cells) from which a shot can reach goal.
    pub fn shot_range(&self) -> f64 {
        (self.width as f64 / 3.0).max(3.0)
    }
}
