//! Multi-agent offline reinforcement learning on a deterministic grid-pitch
//! football game.
//!
//! The crate is organized as a pipeline:
//!
//! * [`nn`] - tensors, reverse-mode autodiff, recurrent policy/value nets,
//!   Adam, and binary checkpoints.
//! * [`env`] - the grid-pitch environment with scripted and expert
//!   controllers, plus the build-in mechanism that delegates non-designated
//!   players to the scripted controller.
//! * [`data`] - episode recording, on-disk replay datasets, and fixed-length
//!   training chunks with replayed initial hidden states.
//! * [`offline`] - the staged behavior-cloning losses (class balancing,
//!   build-in suppression, buffer ranking, advantage weighting) and the
//!   offline training loop.
//! * [`online`] - PPO-style fine-tuning that starts from an offline
//!   checkpoint with the action head re-initialized.
//! * [`dist`] - a worker/learner/data-server runtime over a small framed TCP
//!   protocol, bit-identical to in-process training.
//! * [`eval`] - head-to-head match evaluation and TrueSkill ranking.
//! * [`config`] - run configuration with INI-style config files.

pub mod config;
pub mod data;
pub mod dist;
pub mod env;
pub mod error;
pub mod eval;
pub mod nn;
pub mod offline;
pub mod online;

pub use error::{Error, Result};
