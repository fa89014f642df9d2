//! Grid-pitch football environment: a small, fully deterministic-seeded
//! stand-in for a full football simulator, with scripted build-in players,
//! a stronger demonstration expert, designated-player switching, sparse
//! goal rewards, and structured per-player observations.

pub mod action;
pub mod config;
pub mod controller;
pub mod obs;
pub mod physics;
pub mod state;

pub use action::{Action, ALL_ACTIONS, N_ACTIONS_ACADEMY, N_ACTIONS_FULL};
pub use config::{PitchConfig, SpawnPlan, EPISODE_LEN_EVAL, EPISODE_LEN_TRAIN};
pub use controller::{designated_player, expert_policy, scripted_controller};
pub use obs::{build_observation, layout, obs_dim, ObservationLayout};
pub use physics::{line_cells, reset, step, step_joint, StepOutcome};
pub use state::{Event, GameMode, GameState, Possession, TeamId};
