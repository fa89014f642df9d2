//! Self-play data collection.
//!
//! One team is recorded per episode: a designated player follows the expert
//! controller and is labeled with its action, every teammate submits BUILD_IN
//! (the environment substitutes the scripted controller) and is labeled
//! BUILD_IN. The opposing team plays fully scripted. Which side kicks off is
//! decided by the episode seed, so recording a single side stays unbiased.

use std::fs;
use std::path::Path;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::episode::{config_hash, EpisodeRecord};
use crate::data::store::{write_episode, write_index, ReplayDataset};
use crate::env::{
    build_observation, designated_player, expert_policy, obs_dim, reset, step, Action,
    PitchConfig, SpawnPlan, TeamId,
};
use crate::{Error, Result};

/// Play one full-game episode and record team A's observations, action
/// labels, shared reward, and designated-player index at every step.
pub fn collect_episode(config: &PitchConfig, episode_seed: u64) -> Result<EpisodeRecord> {
    if config.spawn != SpawnPlan::FullGame {
        return Err(Error::invalid(
            "self-play collection requires a full-game scenario; academy presets have no \
             scripted build-in behaviour to imitate",
        ));
    }
    let mut cfg = config.clone();
    cfg.seed = episode_seed;
    let n = cfg.players_per_team;
    let dim = obs_dim(&cfg);
    let mut state = reset(&cfg)?;
    let steps = cfg.episode_len as usize;

    let mut ep = EpisodeRecord {
        config_hash: config_hash(&cfg),
        seed: episode_seed,
        n,
        obs_dim: dim,
        obs: Vec::with_capacity(steps * n * dim),
        labels: Vec::with_capacity(steps * n),
        rewards: Vec::with_capacity(steps),
        designated: Vec::with_capacity(steps),
    };

    loop {
        let designated = designated_player(&state, TeamId::A);
        for i in 0..n {
            ep.obs.extend(build_observation(&cfg, &state, TeamId::A, i));
        }
        let mut acts = vec![Action::BuildIn; n];
        acts[designated] = expert_policy(&cfg, &state, TeamId::A);
        for &a in &acts {
            ep.labels.push(a.index() as u8);
        }
        ep.designated.push(designated as u8);
        let out = step(&cfg, &mut state, &acts)?;
        ep.rewards.push(out.reward);
        if out.done {
            break;
        }
    }
    Ok(ep)
}

/// Collect `episodes` self-play episodes into `out_dir` as a replay dataset.
/// Episode seeds are drawn from a generator seeded with `seed`, so the same
/// arguments always produce byte-identical files. Refuses to overwrite an
/// existing dataset.
pub fn collect_selfplay(
    config: &PitchConfig,
    episodes: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<ReplayDataset> {
    if config.spawn != SpawnPlan::FullGame {
        return Err(Error::invalid(
            "self-play collection requires a full-game scenario",
        ));
    }
    config.validate()?;
    if episodes == 0 {
        return Err(Error::invalid("cannot collect an empty dataset"));
    }
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    if out_dir.join("index.tki").exists() {
        return Err(Error::invalid(format!(
            "dataset already exists at {}",
            out_dir.join("index.tki").display()
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut entries = Vec::with_capacity(episodes);
    for id in 0..episodes {
        let ep_seed: u64 = rng.gen();
        let ep = collect_episode(config, ep_seed)?;
        entries.push(write_episode(out_dir, id as u64, &ep)?);
    }
    write_index(out_dir, &entries)?;
    Ok(ReplayDataset {
        dir: out_dir.to_path_buf(),
        entries,
    })
}

/// Histogram of action labels across every agent-step of the dataset.
pub fn label_counts(dataset: &ReplayDataset) -> Result<Vec<u64>> {
    let mut counts = vec![0u64; crate::env::N_ACTIONS_FULL];
    for i in 0..dataset.len() {
        let ep = dataset.load(i)?;
        for &l in &ep.labels {
            let l = l as usize;
            if l >= counts.len() {
                return Err(Error::invalid(format!(
                    "label {l} out of range in episode {}",
                    dataset.entries[i].id
                )));
            }
            counts[l] += 1;
        }
    }
    Ok(counts)
}
