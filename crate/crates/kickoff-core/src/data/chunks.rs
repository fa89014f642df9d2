//! Fixed-length training chunks cut from stored episodes.
//!
//! Episodes are split into consecutive 25-step chunks. The recurrent state at
//! each chunk boundary is recomputed at batch-construction time by replaying
//! the episode prefix through the current networks, so stale hidden states
//! never leak across epochs. The final chunk of an episode is zero-padded and
//! carries a validity mask.

use std::path::PathBuf;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::episode::{episode_return, trajectory_weight, EpisodeRecord};
use crate::data::store::ReplayDataset;
use crate::nn::RecurrentNet;
use crate::{Error, Result};

pub const CHUNK_LEN: usize = 25;

/// Return-shaping parameters applied while cutting chunks.
#[derive(Debug, Clone, PartialEq)]
pub struct ChunkSpec {
    /// Discount for the value-regression targets.
    pub gamma: f64,
    /// Trajectory weight below the return threshold.
    pub rho0: f64,
    /// Trajectory weight at or above the return threshold.
    pub rho1: f64,
    pub r_threshold: f64,
}

impl Default for ChunkSpec {
    fn default() -> Self {
        ChunkSpec {
            gamma: 0.99,
            rho0: 0.0,
            rho1: 1.0,
            r_threshold: 3.0,
        }
    }
}

/// One minibatch of chunks, flattened for the recurrent nets.
///
/// Shapes (row-major, leading axis slowest):
/// - `obs`: `[CHUNK_LEN, batch, n, obs_dim]`
/// - `global`: `[CHUNK_LEN, batch, n * obs_dim + 2]`
/// - `labels`, per-agent: `[CHUNK_LEN, batch, n]`
/// - `mask`, `rewards`, `targets`: `[CHUNK_LEN, batch]`
/// - `designated`: `[CHUNK_LEN, batch]`
/// - `rho`, `ret`: `[batch]`
/// - `h0_policy`: `[batch, n, hidden_policy]`, `h0_value`: `[batch, hidden_value]`
#[derive(Debug, Clone)]
pub struct ChunkBatch {
    pub batch: usize,
    pub n: usize,
    pub obs_dim: usize,
    pub hidden_policy: usize,
    pub hidden_value: usize,
    pub obs: Vec<f64>,
    pub global: Vec<f64>,
    pub labels: Vec<u8>,
    pub designated: Vec<u8>,
    pub mask: Vec<f64>,
    pub rewards: Vec<f64>,
    pub targets: Vec<f64>,
    pub rho: Vec<f64>,
    pub ret: Vec<f64>,
    pub h0_policy: Vec<f64>,
    pub h0_value: Vec<f64>,
    pub episode_ids: Vec<u64>,
    pub start_steps: Vec<u32>,
}

impl ChunkBatch {
    pub fn global_dim(&self) -> usize {
        self.n * self.obs_dim + 2
    }
}

/// Width of the value-network input for an episode shape: every agent's
/// observation concatenated, plus a score scalar and a remaining-time scalar.
pub fn global_dim(n: usize, obs_dim: usize) -> usize {
    n * obs_dim + 2
}

/// Value-network input rows for every step of an episode, `[T, global_dim]`.
/// The score scalar is the cumulative shared reward before the step scaled by
/// 1/5; the time scalar is the fraction of the episode still to play.
pub fn global_inputs(ep: &EpisodeRecord) -> Vec<f64> {
    let t_len = ep.len();
    let gdim = global_dim(ep.n, ep.obs_dim);
    let mut out = Vec::with_capacity(t_len * gdim);
    let mut score = 0.0;
    for t in 0..t_len {
        out.extend_from_slice(ep.obs_at(t));
        out.push(score / 5.0);
        out.push((t_len - t) as f64 / t_len as f64);
        score += ep.rewards[t];
    }
    out
}

/// Discounted returns-to-go `R_t = sum_{k>=t} gamma^(k-t) r_k`, one per step.
pub fn returns_to_go(rewards: &[f64], gamma: f64) -> Vec<f64> {
    let mut out = vec![0.0; rewards.len()];
    let mut acc = 0.0;
    for t in (0..rewards.len()).rev() {
        acc = rewards[t] + gamma * acc;
        out[t] = acc;
    }
    out
}

pub fn chunk_count(steps: usize) -> usize {
    steps.div_ceil(CHUNK_LEN)
}

struct EpisodeMeta {
    id: u64,
    len: usize,
    targets: Vec<f64>,
    rewards: Vec<f64>,
    rho: f64,
    ret: f64,
    /// `[chunks, n * hidden_policy]`, hidden state before each chunk's first step.
    h0_policy: Vec<Vec<f64>>,
    /// `[chunks, hidden_value]`.
    h0_value: Vec<Vec<f64>>,
}

/// An epoch's worth of shuffled chunk minibatches. Episode payloads are
/// re-read from disk per batch; boundary hidden states, targets, and weights
/// are precomputed once when the stream is built.
pub struct ChunkStream {
    dir: PathBuf,
    episodes: Vec<EpisodeMeta>,
    /// Shuffled (episode index, chunk index) pairs.
    order: Vec<(usize, usize)>,
    batch_size: usize,
    cursor: usize,
    n: usize,
    obs_dim: usize,
    hidden_policy: usize,
    hidden_value: usize,
}

impl ChunkStream {
    pub fn batches_remaining(&self) -> usize {
        (self.order.len() - self.cursor).div_ceil(self.batch_size)
    }

    pub fn total_chunks(&self) -> usize {
        self.order.len()
    }

    fn episode_path(&self, id: u64) -> PathBuf {
        self.dir.join(format!("ep_{id}.tke"))
    }

    fn build_batch(&self, metas: &[(usize, usize)]) -> Result<ChunkBatch> {
        let b = metas.len();
        let n = self.n;
        let dim = self.obs_dim;
        let gdim = global_dim(n, dim);
        let mut batch = ChunkBatch {
            batch: b,
            n,
            obs_dim: dim,
            hidden_policy: self.hidden_policy,
            hidden_value: self.hidden_value,
            obs: vec![0.0; CHUNK_LEN * b * n * dim],
            global: vec![0.0; CHUNK_LEN * b * gdim],
            labels: vec![0; CHUNK_LEN * b * n],
            designated: vec![0; CHUNK_LEN * b],
            mask: vec![0.0; CHUNK_LEN * b],
            rewards: vec![0.0; CHUNK_LEN * b],
            targets: vec![0.0; CHUNK_LEN * b],
            rho: vec![0.0; b],
            ret: vec![0.0; b],
            h0_policy: vec![0.0; b * n * self.hidden_policy],
            h0_value: vec![0.0; b * self.hidden_value],
            episode_ids: Vec::with_capacity(b),
            start_steps: Vec::with_capacity(b),
        };

        for (slot, &(ei, chunk)) in metas.iter().enumerate() {
            let meta = &self.episodes[ei];
            let ep = crate::data::store::read_episode(&self.episode_path(meta.id))?;
            let start = chunk * CHUNK_LEN;
            let take = CHUNK_LEN.min(meta.len - start);
            let globals = global_inputs(&ep);
            for t in 0..take {
                let s = start + t;
                let row = t * b + slot;
                batch.obs[row * n * dim..(row + 1) * n * dim]
                    .copy_from_slice(ep.obs_at(s));
                batch.global[row * gdim..(row + 1) * gdim]
                    .copy_from_slice(&globals[s * gdim..(s + 1) * gdim]);
                batch.labels[row * n..(row + 1) * n].copy_from_slice(ep.labels_at(s));
                batch.designated[row] = ep.designated[s];
                batch.mask[row] = 1.0;
                batch.rewards[row] = meta.rewards[s];
                batch.targets[row] = meta.targets[s];
            }
            batch.rho[slot] = meta.rho;
            batch.ret[slot] = meta.ret;
            let hp = &meta.h0_policy[chunk];
            batch.h0_policy[slot * n * self.hidden_policy..(slot + 1) * n * self.hidden_policy]
                .copy_from_slice(hp);
            batch.h0_value[slot * self.hidden_value..(slot + 1) * self.hidden_value]
                .copy_from_slice(&meta.h0_value[chunk]);
            batch.episode_ids.push(meta.id);
            batch.start_steps.push(start as u32);
        }
        Ok(batch)
    }
}

impl Iterator for ChunkStream {
    type Item = Result<ChunkBatch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.cursor >= self.order.len() {
            return None;
        }
        let end = (self.cursor + self.batch_size).min(self.order.len());
        let metas: Vec<_> = self.order[self.cursor..end].to_vec();
        self.cursor = end;
        Some(self.build_batch(&metas))
    }
}

/// Cut a dataset into shuffled 25-step chunk minibatches for one epoch.
///
/// Boundary hidden states are produced by replaying each episode through the
/// supplied policy and value networks from step zero, so a chunk starting at
/// step `s` resumes exactly where a full-episode forward pass would be.
pub fn make_chunks(
    dataset: &ReplayDataset,
    policy: &RecurrentNet,
    value: &RecurrentNet,
    spec: &ChunkSpec,
    batch_size: usize,
    seed: u64,
) -> Result<ChunkStream> {
    if dataset.is_empty() {
        return Err(Error::invalid("cannot chunk an empty dataset"));
    }
    if batch_size == 0 {
        return Err(Error::invalid("batch_size must be positive"));
    }
    if spec.gamma < 0.0 || spec.gamma > 1.0 {
        return Err(Error::invalid(format!(
            "gamma {} outside [0, 1]",
            spec.gamma
        )));
    }

    let first = dataset.load(0)?;
    let n = first.n;
    let dim = first.obs_dim;
    let gdim = global_dim(n, dim);
    if policy.input != dim {
        return Err(Error::ShapeMismatch {
            op: "make_chunks policy input",
            lhs: vec![policy.input],
            rhs: vec![dim],
        });
    }
    if value.input != gdim {
        return Err(Error::ShapeMismatch {
            op: "make_chunks value input",
            lhs: vec![value.input],
            rhs: vec![gdim],
        });
    }

    let mut episodes = Vec::with_capacity(dataset.len());
    let mut order = Vec::new();
    for i in 0..dataset.len() {
        let ep = if i == 0 { first.clone() } else { dataset.load(i)? };
        if ep.n != n || ep.obs_dim != dim {
            return Err(Error::ShapeMismatch {
                op: "make_chunks episode shape",
                lhs: vec![n, dim],
                rhs: vec![ep.n, ep.obs_dim],
            });
        }
        if ep.is_empty() {
            return Err(Error::invalid(format!(
                "episode {} has no steps",
                dataset.entries[i].id
            )));
        }
        let chunks = chunk_count(ep.len());
        let globals = global_inputs(&ep);
        let mut h_pol = vec![0.0; n * policy.hidden];
        let mut h_val = vec![0.0; value.hidden];
        let mut h0_policy = Vec::with_capacity(chunks);
        let mut h0_value = Vec::with_capacity(chunks);
        for t in 0..ep.len() {
            if t % CHUNK_LEN == 0 {
                h0_policy.push(h_pol.clone());
                h0_value.push(h_val.clone());
            }
            policy.step(ep.obs_at(t), n, &mut h_pol);
            value.step(&globals[t * gdim..(t + 1) * gdim], 1, &mut h_val);
        }
        let ret = episode_return(&ep);
        let meta = EpisodeMeta {
            id: dataset.entries[i].id,
            len: ep.len(),
            targets: returns_to_go(&ep.rewards, spec.gamma),
            rewards: ep.rewards.clone(),
            rho: trajectory_weight(ret, spec.rho0, spec.rho1, spec.r_threshold),
            ret,
            h0_policy,
            h0_value,
        };
        for c in 0..chunks {
            order.push((i, c));
        }
        episodes.push(meta);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for i in (1..order.len()).rev() {
        let j = rng.gen_range(0..=i);
        order.swap(i, j);
    }

    Ok(ChunkStream {
        dir: dataset.dir.clone(),
        episodes,
        order,
        batch_size,
        cursor: 0,
        n,
        obs_dim: dim,
        hidden_policy: policy.hidden,
        hidden_value: value.hidden,
    })
}
