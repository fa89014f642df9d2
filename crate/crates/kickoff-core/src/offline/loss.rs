//! Offline-training losses over chunk batches.
//!
//! The full objective is `L = L_adv + eta * L_mb`. `L_adv` is an imitation
//! log loss where every agent-step term can be scaled by an inverse-frequency
//! action weight alpha(u), a per-trajectory return weight rho(tau), and a
//! per-step advantage weight w = clip(exp(A/beta)). `L_mb` pushes the
//! designated player's BUILD_IN probability down. Stage flags enable one
//! refinement at a time, and with all flags off the objective is the plain
//! behaviour-cloning log loss.
//!
//! Every loss has a plain scalar form (for oracles and metrics) and a tape
//! form (for gradients); both reduce with a mean over the valid steps of the
//! chunk, so zero-padded steps never contribute.

use crate::data::chunks::ChunkBatch;
use crate::data::episode::trajectory_weight;
use crate::env::{Action, N_ACTIONS_FULL};
use crate::nn::tape::{Tape, Var};
use crate::nn::{kernels, RecurrentNet, TapeNet};
use crate::{Error, Result};

/// Which refinements of the base log loss are active.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StageFlags {
    pub use_alpha: bool,
    pub use_min_buildin: bool,
    pub use_buffer_ranking: bool,
    pub use_advantage: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    /// Per-action imitation weights, one entry per action index.
    pub alpha: Vec<f64>,
    /// Coefficient on the build-in suppression term.
    pub eta: f64,
    /// Advantage temperature.
    pub beta: f64,
    pub w_min: f64,
    pub w_max: f64,
    /// Trajectory weight below / at-or-above the return threshold.
    pub rho0: f64,
    pub rho1: f64,
    pub r_threshold: f64,
    /// Discount for value-regression targets.
    pub gamma: f64,
    pub flags: StageFlags,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            alpha: vec![1.0; N_ACTIONS_FULL],
            eta: 1.0,
            beta: 1.0,
            w_min: 0.5,
            w_max: 2.0,
            rho0: 0.0,
            rho1: 1.0,
            r_threshold: 3.0,
            gamma: 0.99,
            flags: StageFlags::default(),
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.beta > 0.0) {
            return Err(Error::invalid(format!("beta {} must be > 0", self.beta)));
        }
        if !(self.w_min > 0.0 && self.w_min <= self.w_max) {
            return Err(Error::invalid(format!(
                "clip bounds must satisfy 0 < w_min <= w_max, got [{}, {}]",
                self.w_min, self.w_max
            )));
        }
        if self.alpha.is_empty() || self.alpha.iter().any(|&a| !(a > 0.0)) {
            return Err(Error::invalid("alpha weights must all be positive"));
        }
        if !(self.eta >= 0.0) {
            return Err(Error::invalid(format!("eta {} must be >= 0", self.eta)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!(
                "gamma {} outside [0, 1]",
                self.gamma
            )));
        }
        Ok(())
    }

    /// Per-trajectory weights for a batch: rho(tau) when buffer ranking is
    /// on, 1 otherwise.
    pub fn trajectory_weights(&self, batch: &ChunkBatch) -> Vec<f64> {
        batch
            .ret
            .iter()
            .map(|&r| {
                if self.flags.use_buffer_ranking {
                    trajectory_weight(r, self.rho0, self.rho1, self.r_threshold)
                } else {
                    1.0
                }
            })
            .collect()
    }
}

/// Inverse-frequency action weights, normalized so the count-weighted mean is
/// exactly 1. Actions never seen get the largest computed weight.
pub fn alpha_weights(action_counts: &[u64]) -> Result<Vec<f64>> {
    if action_counts.iter().all(|&c| c == 0) {
        return Err(Error::invalid(
            "alpha_weights needs at least one action with a positive count",
        ));
    }
    let raw: Vec<f64> = action_counts
        .iter()
        .map(|&c| if c > 0 { 1.0 / c as f64 } else { 0.0 })
        .collect();
    let max_raw = raw.iter().cloned().fold(0.0, f64::max);
    let total: f64 = action_counts.iter().map(|&c| c as f64).sum();
    let weighted_mean: f64 = action_counts
        .iter()
        .zip(&raw)
        .map(|(&c, &r)| c as f64 * r)
        .sum::<f64>()
        / total;
    Ok(raw
        .iter()
        .zip(action_counts)
        .map(|(&r, &c)| {
            let r = if c > 0 { r } else { max_raw };
            r / weighted_mean
        })
        .collect())
}

fn check_logits(batch: &ChunkBatch, logits: &[Vec<f64>]) -> Result<usize> {
    let rows = batch.batch * batch.n;
    if logits.len() != crate::data::CHUNK_LEN || rows == 0 {
        return Err(Error::ShapeMismatch {
            op: "loss logits steps",
            lhs: vec![logits.len()],
            rhs: vec![crate::data::CHUNK_LEN],
        });
    }
    let k = logits[0].len() / rows;
    if k == 0 || logits.iter().any(|l| l.len() != rows * k) {
        return Err(Error::ShapeMismatch {
            op: "loss logits rows",
            lhs: vec![logits[0].len()],
            rhs: vec![rows],
        });
    }
    if batch.labels.iter().any(|&l| l as usize >= k) {
        return Err(Error::invalid(format!(
            "label out of range for {k} actions"
        )));
    }
    Ok(k)
}

fn valid_steps(batch: &ChunkBatch) -> f64 {
    batch.mask.iter().sum()
}

fn logloss_core(
    batch: &ChunkBatch,
    logits: &[Vec<f64>],
    config: &LossConfig,
    w: Option<&[f64]>,
) -> Result<f64> {
    let k = check_logits(batch, logits)?;
    if config.flags.use_alpha && config.alpha.len() != k {
        return Err(Error::ShapeMismatch {
            op: "alpha table",
            lhs: vec![config.alpha.len()],
            rhs: vec![k],
        });
    }
    let b = batch.batch;
    let n = batch.n;
    let rho = config.trajectory_weights(batch);
    let nvalid = valid_steps(batch);
    let mut acc = 0.0;
    let mut lsm = vec![0.0; b * n * k];
    for (t, step_logits) in logits.iter().enumerate() {
        kernels::log_softmax_rows(step_logits, &mut lsm, b * n, k);
        for slot in 0..b {
            let row_tb = t * b + slot;
            if batch.mask[row_tb] == 0.0 {
                continue;
            }
            let wt = w.map_or(1.0, |w| w[row_tb]);
            let mut step = 0.0;
            for i in 0..n {
                let r = slot * n + i;
                let u = batch.labels[row_tb * n + i] as usize;
                let a = if config.flags.use_alpha {
                    config.alpha[u]
                } else {
                    1.0
                };
                step += a * (-lsm[r * k + u]);
            }
            acc += rho[slot] * wt * step / n as f64;
        }
    }
    Ok(acc / nvalid)
}

/// Imitation log loss: mean over valid steps of
/// `rho(tau) * (1/n) * sum_i alpha(u_i) * (-log pi(u_i | o_i))`.
pub fn weighted_logloss(
    batch: &ChunkBatch,
    logits: &[Vec<f64>],
    config: &LossConfig,
) -> Result<f64> {
    config.validate()?;
    logloss_core(batch, logits, config, None)
}

/// Build-in suppression: mean over valid steps of
/// `-log(1 - pi(BUILD_IN | o_designated))`. Only defined for the full-game
/// action space.
pub fn min_buildin_loss(batch: &ChunkBatch, logits: &[Vec<f64>]) -> Result<f64> {
    let k = check_logits(batch, logits)?;
    if k != N_ACTIONS_FULL {
        return Err(Error::invalid(format!(
            "build-in loss needs the {N_ACTIONS_FULL}-action full-game space, got {k} actions"
        )));
    }
    let bi = Action::BuildIn.index();
    let b = batch.batch;
    let n = batch.n;
    let nvalid = valid_steps(batch);
    let mut acc = 0.0;
    let mut lsm = vec![0.0; b * n * k];
    for (t, step_logits) in logits.iter().enumerate() {
        kernels::log_softmax_rows(step_logits, &mut lsm, b * n, k);
        for slot in 0..b {
            let row_tb = t * b + slot;
            if batch.mask[row_tb] == 0.0 {
                continue;
            }
            let i = batch.designated[row_tb] as usize;
            let p = lsm[(slot * n + i) * k + bi].exp();
            acc += -(-p).ln_1p();
        }
    }
    Ok(acc / nvalid)
}

/// Policy logits for a whole chunk, resuming from the batch's replayed
/// hidden states: `[CHUNK_LEN]` entries of `[batch * n, actions]`.
pub fn policy_logits(batch: &ChunkBatch, policy: &RecurrentNet) -> Result<Vec<Vec<f64>>> {
    if policy.input != batch.obs_dim || policy.hidden != batch.hidden_policy {
        return Err(Error::ShapeMismatch {
            op: "policy_logits",
            lhs: vec![policy.input, policy.hidden],
            rhs: vec![batch.obs_dim, batch.hidden_policy],
        });
    }
    let rows = batch.batch * batch.n;
    let width = rows * batch.obs_dim;
    let mut h = batch.h0_policy.clone();
    Ok((0..crate::data::CHUNK_LEN)
        .map(|t| policy.step(&batch.obs[t * width..(t + 1) * width], rows, &mut h))
        .collect())
}

/// Per-step advantages `A = R_t^D - V(s_t)` as a `[CHUNK_LEN, batch]` grid;
/// padded steps get 0.
pub fn advantage(batch: &ChunkBatch, value: &RecurrentNet) -> Result<Vec<f64>> {
    let gdim = batch.global_dim();
    if value.input != gdim || value.hidden != batch.hidden_value {
        return Err(Error::ShapeMismatch {
            op: "advantage",
            lhs: vec![value.input, value.hidden],
            rhs: vec![gdim, batch.hidden_value],
        });
    }
    let b = batch.batch;
    let mut h = batch.h0_value.clone();
    let mut out = vec![0.0; crate::data::CHUNK_LEN * b];
    for t in 0..crate::data::CHUNK_LEN {
        let v = value.step(&batch.global[t * b * gdim..(t + 1) * b * gdim], b, &mut h);
        for slot in 0..b {
            let row = t * b + slot;
            out[row] = (batch.targets[row] - v[slot]) * batch.mask[row];
        }
    }
    Ok(out)
}

/// Elementwise `clip(exp(A / beta), w_min, w_max)`.
pub fn advantage_weight(a: &[f64], config: &LossConfig) -> Vec<f64> {
    a.iter()
        .map(|&x| (x / config.beta).exp().clamp(config.w_min, config.w_max))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossBreakdown {
    pub total: f64,
    pub adv: f64,
    pub min_buildin: f64,
}

/// Full objective over one chunk batch: the advantage-weighted imitation term
/// plus `eta` times the build-in suppression term, per the active stage flags.
pub fn total_loss(
    batch: &ChunkBatch,
    policy: &RecurrentNet,
    value: &RecurrentNet,
    config: &LossConfig,
) -> Result<LossBreakdown> {
    config.validate()?;
    let logits = policy_logits(batch, policy)?;
    let w = if config.flags.use_advantage {
        Some(advantage_weight(&advantage(batch, value)?, config))
    } else {
        None
    };
    let adv = logloss_core(batch, &logits, config, w.as_deref())?;
    let min_buildin = if config.flags.use_min_buildin {
        min_buildin_loss(batch, &logits)?
    } else {
        0.0
    };
    Ok(LossBreakdown {
        total: adv + config.eta * min_buildin,
        adv,
        min_buildin,
    })
}

/// Tape-built loss over one chunk batch, for gradient computation. The
/// per-step log-softmax nodes are exposed so a caller can read action
/// probabilities for metrics without a second forward pass.
pub struct TapeLoss {
    pub total: Var,
    pub adv: Var,
    pub min_buildin: Var,
    pub log_probs: Vec<Var>,
}

/// Advantage weights resolved for the tape loss: clipped exponential weights
/// when the flag is on, uniform 1s otherwise. Weights are treated as
/// constants; no gradient flows into the value network from the policy loss.
pub fn resolve_weights(
    batch: &ChunkBatch,
    value: &RecurrentNet,
    config: &LossConfig,
) -> Result<Vec<f64>> {
    if config.flags.use_advantage {
        Ok(advantage_weight(&advantage(batch, value)?, config))
    } else {
        Ok(vec![1.0; crate::data::CHUNK_LEN * batch.batch])
    }
}

pub fn policy_loss_graph(
    tape: &mut Tape,
    net: &TapeNet,
    policy: &RecurrentNet,
    batch: &ChunkBatch,
    config: &LossConfig,
    w: &[f64],
) -> Result<TapeLoss> {
    config.validate()?;
    if policy.input != batch.obs_dim || policy.hidden != batch.hidden_policy {
        return Err(Error::ShapeMismatch {
            op: "policy_loss_graph",
            lhs: vec![policy.input, policy.hidden],
            rhs: vec![batch.obs_dim, batch.hidden_policy],
        });
    }
    let k = policy.output;
    if config.flags.use_alpha && config.alpha.len() != k {
        return Err(Error::ShapeMismatch {
            op: "alpha table",
            lhs: vec![config.alpha.len()],
            rhs: vec![k],
        });
    }
    if batch.labels.iter().any(|&l| l as usize >= k) {
        return Err(Error::invalid(format!(
            "label out of range for {k} actions"
        )));
    }
    let with_buildin = k == N_ACTIONS_FULL;
    if config.flags.use_min_buildin && !with_buildin {
        return Err(Error::invalid(format!(
            "build-in loss needs the {N_ACTIONS_FULL}-action full-game space, got {k} actions"
        )));
    }

    let b = batch.batch;
    let n = batch.n;
    let rows = b * n;
    let rho = config.trajectory_weights(batch);
    let nvalid = valid_steps(batch);
    let bi = Action::BuildIn.index();

    // Column selector dropping the BUILD_IN column; lets the complement
    // probability come out of two log-softmaxes: for any column c != bi,
    // log(1 - pi(bi)) = log_softmax_all[c] - log_softmax_without_bi[c].
    let mb_parts = if config.flags.use_min_buildin {
        let mut sel = vec![0.0; k * (k - 1)];
        for (j, col) in (0..k).filter(|&c| c != bi).enumerate() {
            sel[col * (k - 1) + j] = 1.0;
        }
        Some((tape.constant_from(k, k - 1, sel), vec![0usize; rows]))
    } else {
        None
    };

    let mut h = tape.constant_from(rows, policy.hidden, batch.h0_policy.clone());
    let mut adv_acc: Option<Var> = None;
    let mut mb_acc: Option<Var> = None;
    let mut log_probs = Vec::with_capacity(crate::data::CHUNK_LEN);

    for t in 0..crate::data::CHUNK_LEN {
        let width = rows * batch.obs_dim;
        let x = tape.constant_from(
            rows,
            batch.obs_dim,
            batch.obs[t * width..(t + 1) * width].to_vec(),
        );
        h = net.trunk_step(tape, x, h)?;
        let logits = net.head(tape, h)?;
        let lsm = tape.log_softmax_rows(logits)?;
        log_probs.push(lsm);

        let idx: Vec<usize> = (0..rows)
            .map(|r| batch.labels[(t * b + r / n) * n + r % n] as usize)
            .collect();
        let picked = tape.gather_cols(lsm, &idx)?;
        let coeffs: Vec<f64> = (0..rows)
            .map(|r| {
                let slot = r / n;
                let row_tb = t * b + slot;
                let u = idx[r];
                let a = if config.flags.use_alpha {
                    config.alpha[u]
                } else {
                    1.0
                };
                -batch.mask[row_tb] * rho[slot] * w[row_tb] * a / (n as f64 * nvalid)
            })
            .collect();
        let term = tape.weighted_sum(picked, &coeffs)?;
        adv_acc = Some(match adv_acc {
            Some(acc) => tape.add(acc, term)?,
            None => term,
        });

        if let Some((sel, zeros)) = &mb_parts {
            let sub = tape.matmul(logits, *sel)?;
            let lsm_sub = tape.log_softmax_rows(sub)?;
            let lp_c = tape.gather_cols(lsm, zeros)?;
            let lp_sub_c = tape.gather_cols(lsm_sub, zeros)?;
            let log_one_minus = tape.sub(lp_c, lp_sub_c)?;
            let coeffs: Vec<f64> = (0..rows)
                .map(|r| {
                    let slot = r / n;
                    let row_tb = t * b + slot;
                    let designated = batch.designated[row_tb] as usize == r % n;
                    if designated {
                        -batch.mask[row_tb] / nvalid
                    } else {
                        0.0
                    }
                })
                .collect();
            let term = tape.weighted_sum(log_one_minus, &coeffs)?;
            mb_acc = Some(match mb_acc {
                Some(acc) => tape.add(acc, term)?,
                None => term,
            });
        }
    }

    let adv = adv_acc.expect("chunk has at least one step");
    let min_buildin = match mb_acc {
        Some(v) => v,
        None => tape.constant_from(1, 1, vec![0.0]),
    };
    let total = if config.flags.use_min_buildin {
        let scaled = tape.scale(min_buildin, config.eta)?;
        tape.add(adv, scaled)?
    } else {
        adv
    };
    Ok(TapeLoss {
        total,
        adv,
        min_buildin,
        log_probs,
    })
}

/// Squared-error value regression over one chunk batch, averaged over valid
/// steps.
pub fn value_loss_graph(
    tape: &mut Tape,
    net: &TapeNet,
    value: &RecurrentNet,
    batch: &ChunkBatch,
) -> Result<Var> {
    let gdim = batch.global_dim();
    if value.input != gdim || value.hidden != batch.hidden_value {
        return Err(Error::ShapeMismatch {
            op: "value_loss_graph",
            lhs: vec![value.input, value.hidden],
            rhs: vec![gdim, batch.hidden_value],
        });
    }
    let b = batch.batch;
    let nvalid = valid_steps(batch);
    let mut h = tape.constant_from(b, value.hidden, batch.h0_value.clone());
    let mut acc: Option<Var> = None;
    for t in 0..crate::data::CHUNK_LEN {
        let x = tape.constant_from(
            b,
            gdim,
            batch.global[t * b * gdim..(t + 1) * b * gdim].to_vec(),
        );
        h = net.trunk_step(tape, x, h)?;
        let v = net.head(tape, h)?;
        let target = tape.constant_from(b, 1, batch.targets[t * b..(t + 1) * b].to_vec());
        let diff = tape.sub(v, target)?;
        let sq = tape.mul(diff, diff)?;
        let coeffs: Vec<f64> = batch.mask[t * b..(t + 1) * b]
            .iter()
            .map(|&m| m / nvalid)
            .collect();
        let term = tape.weighted_sum(sq, &coeffs)?;
        acc = Some(match acc {
            Some(a) => tape.add(a, term)?,
            None => term,
        });
    }
    Ok(acc.expect("chunk has at least one step"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::chunks::{global_dim, CHUNK_LEN};
    use crate::nn::gradcheck::{check_grads, jitter_params, GradCheckSettings};
    use crate::nn::ParamSet;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn zeroed(mut net: RecurrentNet) -> RecurrentNet {
        for p in net.params.iter_mut() {
            for v in p.value.data_mut() {
                *v = 0.0;
            }
        }
        net
    }

    fn synthetic_batch(seed: u64, b: usize, n: usize, dim: usize, valid: &[usize]) -> ChunkBatch {
        assert_eq!(valid.len(), b);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden_policy = 6;
        let hidden_value = 5;
        let gdim = global_dim(n, dim);
        let mut batch = ChunkBatch {
            batch: b,
            n,
            obs_dim: dim,
            hidden_policy,
            hidden_value,
            obs: vec![0.0; CHUNK_LEN * b * n * dim],
            global: vec![0.0; CHUNK_LEN * b * gdim],
            labels: vec![0; CHUNK_LEN * b * n],
            designated: vec![0; CHUNK_LEN * b],
            mask: vec![0.0; CHUNK_LEN * b],
            rewards: vec![0.0; CHUNK_LEN * b],
            targets: vec![0.0; CHUNK_LEN * b],
            rho: vec![0.0; b],
            ret: (0..b).map(|_| rng.gen_range(-2.0..6.0)).collect(),
            h0_policy: (0..b * n * hidden_policy)
                .map(|_| rng.gen_range(-0.5..0.5))
                .collect(),
            h0_value: (0..b * hidden_value)
                .map(|_| rng.gen_range(-0.5..0.5))
                .collect(),
            episode_ids: (0..b as u64).collect(),
            start_steps: vec![0; b],
        };
        for slot in 0..b {
            for t in 0..valid[slot] {
                let row = t * b + slot;
                batch.mask[row] = 1.0;
                batch.designated[row] = rng.gen_range(0..n) as u8;
                batch.targets[row] = rng.gen_range(-1.5..1.5);
                batch.rewards[row] = rng.gen_range(-1.0..1.0);
                for i in 0..n {
                    let u = if i == batch.designated[row] as usize {
                        rng.gen_range(0..N_ACTIONS_FULL - 1)
                    } else {
                        Action::BuildIn.index()
                    };
                    batch.labels[row * n + i] = u as u8;
                }
                for v in &mut batch.obs[row * n * dim..(row + 1) * n * dim] {
                    *v = rng.gen_range(-1.0..1.0);
                }
                for v in &mut batch.global[row * gdim..(row + 1) * gdim] {
                    *v = rng.gen_range(-1.0..1.0);
                }
            }
        }
        batch
    }

    fn random_logits(seed: u64, b: usize, n: usize, k: usize) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..CHUNK_LEN)
            .map(|_| (0..b * n * k).map(|_| rng.gen_range(-2.0..2.0)).collect())
            .collect()
    }

    fn scalar_log_softmax(row: &[f64]) -> Vec<f64> {
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = m + row.iter().map(|&x| (x - m).exp()).sum::<f64>().ln();
        row.iter().map(|&x| x - lse).collect()
    }

    #[test]
    fn alpha_weights_match_the_inverse_frequency_examples() {
        let a = alpha_weights(&[90, 10]).unwrap();
        assert_abs_diff_eq!(a[0], 5.0 / 9.0, epsilon = 1e-12);
        assert_abs_diff_eq!(a[1], 5.0, epsilon = 1e-12);
        assert_abs_diff_eq!(0.9 * a[0] + 0.1 * a[1], 1.0, epsilon = 1e-12);

        let uniform = alpha_weights(&[7; 12]).unwrap();
        for &w in &uniform {
            assert_abs_diff_eq!(w, 1.0, epsilon = 1e-12);
        }

        assert_abs_diff_eq!(alpha_weights(&[1]).unwrap()[0], 1.0, epsilon = 1e-15);
        assert!(alpha_weights(&[0, 0, 0]).is_err());

        let with_unseen = alpha_weights(&[0, 10, 30]).unwrap();
        assert_abs_diff_eq!(with_unseen[0], with_unseen[1], epsilon = 1e-12);
        assert_abs_diff_eq!(with_unseen[1], 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(with_unseen[2], 2.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn alpha_weights_keep_count_weighted_mean_at_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let counts: Vec<u64> = (0..20).map(|_| rng.gen_range(0..500)).collect();
            if counts.iter().all(|&c| c == 0) {
                continue;
            }
            let a = alpha_weights(&counts).unwrap();
            let total: f64 = counts.iter().map(|&c| c as f64).sum();
            let mean: f64 = counts
                .iter()
                .zip(&a)
                .map(|(&c, &w)| c as f64 * w)
                .sum::<f64>()
                / total;
            assert_abs_diff_eq!(mean, 1.0, epsilon = 1e-9);
            assert!(a.iter().all(|&w| w > 0.0));
        }
    }

    #[test]
    fn uniform_policy_logloss_is_log_k() {
        let batch = synthetic_batch(0, 3, 2, 4, &[25, 25, 25]);
        let logits = vec![vec![0.0; 3 * 2 * N_ACTIONS_FULL]; CHUNK_LEN];
        let config = LossConfig::default();
        let loss = weighted_logloss(&batch, &logits, &config).unwrap();
        assert_abs_diff_eq!(loss, (N_ACTIONS_FULL as f64).ln(), epsilon = 1e-12);
    }

    #[test]
    fn below_threshold_trajectories_zero_the_loss() {
        let mut batch = synthetic_batch(1, 2, 2, 4, &[25, 10]);
        batch.ret = vec![0.0, 2.999];
        let logits = random_logits(2, 2, 2, N_ACTIONS_FULL);
        let config = LossConfig {
            flags: StageFlags {
                use_buffer_ranking: true,
                ..StageFlags::default()
            },
            ..LossConfig::default()
        };
        let loss = weighted_logloss(&batch, &logits, &config).unwrap();
        assert_eq!(loss, 0.0);
    }

    #[test]
    fn logloss_matches_a_triple_loop_oracle() {
        let b = 2;
        let n = 2;
        let k = N_ACTIONS_FULL;
        let batch = synthetic_batch(5, b, n, 3, &[25, 7]);
        let logits = random_logits(6, b, n, k);
        let mut alpha: Vec<f64> = (0..k).map(|i| 0.2 + 0.1 * i as f64).collect();
        let mean: f64 = alpha.iter().sum::<f64>() / k as f64;
        for a in &mut alpha {
            *a /= mean;
        }
        let config = LossConfig {
            alpha: alpha.clone(),
            flags: StageFlags {
                use_alpha: true,
                use_buffer_ranking: true,
                ..StageFlags::default()
            },
            ..LossConfig::default()
        };

        let mut expected = 0.0;
        let mut nvalid = 0.0;
        for t in 0..CHUNK_LEN {
            for slot in 0..b {
                let row_tb = t * b + slot;
                if batch.mask[row_tb] == 0.0 {
                    continue;
                }
                nvalid += 1.0;
                let rho = if batch.ret[slot] >= 3.0 { 1.0 } else { 0.0 };
                let mut step = 0.0;
                for i in 0..n {
                    let r = slot * n + i;
                    let lp = scalar_log_softmax(&logits[t][r * k..(r + 1) * k]);
                    let u = batch.labels[row_tb * n + i] as usize;
                    step += alpha[u] * (-lp[u]);
                }
                expected += rho * step / n as f64;
            }
        }
        expected /= nvalid;

        let got = weighted_logloss(&batch, &logits, &config).unwrap();
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn min_buildin_matches_uniform_arithmetic_and_oracle() {
        let batch = synthetic_batch(7, 2, 3, 4, &[25, 25]);
        let logits = vec![vec![0.0; 2 * 3 * N_ACTIONS_FULL]; CHUNK_LEN];
        let loss = min_buildin_loss(&batch, &logits).unwrap();
        let expect = -(19.0f64 / 20.0).ln();
        assert_abs_diff_eq!(loss, expect, epsilon = 1e-12);

        let logits = random_logits(8, 2, 3, N_ACTIONS_FULL);
        let got = min_buildin_loss(&batch, &logits).unwrap();
        let k = N_ACTIONS_FULL;
        let mut expected = 0.0;
        let mut nvalid = 0.0;
        for t in 0..CHUNK_LEN {
            for slot in 0..2 {
                let row_tb = t * 2 + slot;
                if batch.mask[row_tb] == 0.0 {
                    continue;
                }
                nvalid += 1.0;
                let i = batch.designated[row_tb] as usize;
                let r = slot * 3 + i;
                let lp = scalar_log_softmax(&logits[t][r * k..(r + 1) * k]);
                expected += -(1.0 - lp[Action::BuildIn.index()].exp()).ln();
            }
        }
        expected /= nvalid;
        assert_abs_diff_eq!(got, expected, epsilon = 1e-12);
    }

    #[test]
    fn min_buildin_rejects_academy_action_spaces() {
        let batch = synthetic_batch(9, 2, 2, 4, &[25, 25]);
        let logits = random_logits(10, 2, 2, crate::env::N_ACTIONS_ACADEMY);
        assert!(min_buildin_loss(&batch, &logits).is_err());
    }

    #[test]
    fn zero_value_net_makes_advantage_equal_targets() {
        let batch = synthetic_batch(11, 3, 2, 4, &[25, 12, 25]);
        let value = zeroed(RecurrentNet::new_value(global_dim(2, 4), 5, 0));
        let a = advantage(&batch, &value).unwrap();
        for t in 0..CHUNK_LEN {
            for slot in 0..3 {
                let row = t * 3 + slot;
                if batch.mask[row] == 1.0 {
                    assert_abs_diff_eq!(a[row], batch.targets[row], epsilon = 1e-12);
                } else {
                    assert_eq!(a[row], 0.0);
                }
            }
        }
    }

    #[test]
    fn advantage_weights_respect_temperature_and_clipping() {
        let config = LossConfig::default();
        assert_abs_diff_eq!(advantage_weight(&[0.0], &config)[0], 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(
            advantage_weight(&[2.0f64.ln()], &config)[0],
            2.0,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(advantage_weight(&[-5.0], &config)[0], 0.5, epsilon = 1e-15);
    }

    proptest! {
        #[test]
        fn advantage_weight_stays_in_bounds(
            a in proptest::collection::vec(-50.0f64..50.0, 1..40),
            beta in 0.1f64..10.0,
        ) {
            let config = LossConfig { beta, ..LossConfig::default() };
            for &w in &advantage_weight(&a, &config) {
                prop_assert!((0.5..=2.0).contains(&w));
            }
        }

        #[test]
        fn advantage_weight_is_scale_invariant(
            a in proptest::collection::vec(-5.0f64..5.0, 1..20),
            beta in 0.1f64..4.0,
            c in 0.2f64..5.0,
        ) {
            let base = LossConfig { beta, ..LossConfig::default() };
            let scaled_cfg = LossConfig { beta: beta * c, ..LossConfig::default() };
            let scaled_a: Vec<f64> = a.iter().map(|&x| x * c).collect();
            let w1 = advantage_weight(&a, &base);
            let w2 = advantage_weight(&scaled_a, &scaled_cfg);
            for (x, y) in w1.iter().zip(&w2) {
                prop_assert!((x - y).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn flags_off_total_loss_is_the_plain_logloss() {
        let batch = synthetic_batch(13, 2, 2, 4, &[25, 18]);
        let policy = RecurrentNet::new_policy(4, 6, N_ACTIONS_FULL, 3);
        let value = RecurrentNet::new_value(global_dim(2, 4), 5, 4);
        let config = LossConfig {
            eta: 0.0,
            ..LossConfig::default()
        };
        let breakdown = total_loss(&batch, &policy, &value, &config).unwrap();
        let logits = policy_logits(&batch, &policy).unwrap();
        let plain = weighted_logloss(&batch, &logits, &config).unwrap();
        assert_abs_diff_eq!(breakdown.total, plain, epsilon = 1e-15);
        assert_eq!(breakdown.min_buildin, 0.0);
    }

    #[test]
    fn degenerate_clip_reduces_the_advantage_rung() {
        let batch = synthetic_batch(15, 3, 2, 4, &[25, 25, 9]);
        let policy = RecurrentNet::new_policy(4, 6, N_ACTIONS_FULL, 5);
        let value = RecurrentNet::new_value(global_dim(2, 4), 5, 6);
        let br_flags = StageFlags {
            use_alpha: true,
            use_min_buildin: true,
            use_buffer_ranking: true,
            use_advantage: false,
        };
        let aw_pinned = LossConfig {
            w_min: 1.0,
            w_max: 1.0,
            flags: StageFlags {
                use_advantage: true,
                ..br_flags
            },
            ..LossConfig::default()
        };
        let br = LossConfig {
            flags: br_flags,
            ..LossConfig::default()
        };
        let a = total_loss(&batch, &policy, &value, &aw_pinned).unwrap();
        let b = total_loss(&batch, &policy, &value, &br).unwrap();
        assert_abs_diff_eq!(a.adv, b.adv, epsilon = 1e-12);
        assert_abs_diff_eq!(a.total, b.total, epsilon = 1e-12);
    }

    #[test]
    fn each_flag_touches_only_its_term() {
        let mut batch = synthetic_batch(17, 2, 2, 4, &[25, 25]);
        batch.ret = vec![5.0, 1.0];
        let policy = RecurrentNet::new_policy(4, 6, N_ACTIONS_FULL, 7);
        let value = RecurrentNet::new_value(global_dim(2, 4), 5, 8);
        let alpha = alpha_weights(&{
            let mut c = vec![3u64; N_ACTIONS_FULL];
            c[Action::BuildIn.index()] = 50;
            c
        })
        .unwrap();
        let run = |flags: StageFlags| {
            let config = LossConfig {
                alpha: alpha.clone(),
                flags,
                ..LossConfig::default()
            };
            total_loss(&batch, &policy, &value, &config).unwrap()
        };
        let base = run(StageFlags::default());
        let with_alpha = run(StageFlags {
            use_alpha: true,
            ..StageFlags::default()
        });
        assert_ne!(base.adv, with_alpha.adv);
        assert_eq!(base.min_buildin, with_alpha.min_buildin);

        let with_mb = run(StageFlags {
            use_alpha: true,
            use_min_buildin: true,
            ..StageFlags::default()
        });
        assert_abs_diff_eq!(with_mb.adv, with_alpha.adv, epsilon = 1e-15);
        assert!(with_mb.min_buildin > 0.0);

        let with_br = run(StageFlags {
            use_alpha: true,
            use_min_buildin: true,
            use_buffer_ranking: true,
            ..StageFlags::default()
        });
        assert_abs_diff_eq!(with_br.min_buildin, with_mb.min_buildin, epsilon = 1e-15);
        assert_ne!(with_br.adv, with_mb.adv);

        let with_aw = run(StageFlags {
            use_alpha: true,
            use_min_buildin: true,
            use_buffer_ranking: true,
            use_advantage: true,
        });
        assert_abs_diff_eq!(with_aw.min_buildin, with_br.min_buildin, epsilon = 1e-15);
        assert_ne!(with_aw.adv, with_br.adv);
    }

    #[test]
    fn tape_loss_agrees_with_the_scalar_loss() {
        let batch = synthetic_batch(19, 2, 2, 4, &[25, 13]);
        let mut policy = RecurrentNet::new_policy(4, 6, N_ACTIONS_FULL, 9);
        jitter_params(&mut policy.params, 0.05, 1);
        let value = RecurrentNet::new_value(global_dim(2, 4), 5, 10);
        let config = LossConfig {
            alpha: alpha_weights(&[5; N_ACTIONS_FULL]).unwrap(),
            flags: StageFlags {
                use_alpha: true,
                use_min_buildin: true,
                use_buffer_ranking: true,
                use_advantage: true,
            },
            ..LossConfig::default()
        };
        let scalar = total_loss(&batch, &policy, &value, &config).unwrap();

        let mut tape = Tape::new();
        let net = TapeNet::bind(&mut tape, &policy);
        let w = resolve_weights(&batch, &value, &config).unwrap();
        let graph = policy_loss_graph(&mut tape, &net, &policy, &batch, &config, &w).unwrap();
        assert_abs_diff_eq!(tape.scalar_value(graph.total), scalar.total, epsilon = 1e-10);
        assert_abs_diff_eq!(tape.scalar_value(graph.adv), scalar.adv, epsilon = 1e-10);
        assert_abs_diff_eq!(
            tape.scalar_value(graph.min_buildin),
            scalar.min_buildin,
            epsilon = 1e-10
        );
    }

    #[test]
    fn tape_gradients_pass_finite_difference_checks() {
        let batch = synthetic_batch(21, 2, 2, 3, &[25, 8]);
        let mut policy = RecurrentNet::new_policy(3, 6, N_ACTIONS_FULL, 11);
        jitter_params(&mut policy.params, 0.1, 2);
        let value = RecurrentNet::new_value(global_dim(2, 3), 5, 12);
        let config = LossConfig {
            alpha: alpha_weights(&[3; N_ACTIONS_FULL]).unwrap(),
            flags: StageFlags {
                use_alpha: true,
                use_min_buildin: true,
                use_buffer_ranking: true,
                use_advantage: true,
            },
            ..LossConfig::default()
        };
        let w = resolve_weights(&batch, &value, &config).unwrap();

        let mut tape = Tape::new();
        let net = TapeNet::bind(&mut tape, &policy);
        let graph = policy_loss_graph(&mut tape, &net, &policy, &batch, &config, &w).unwrap();
        let grads = tape.backward(graph.total).unwrap();
        let analytic = net.grads(&tape, &grads);

        let eval = |params: &ParamSet| -> f64 {
            let probe = RecurrentNet {
                input: policy.input,
                hidden: policy.hidden,
                output: policy.output,
                params: params.clone(),
            };
            let logits = policy_logits(&batch, &probe).unwrap();
            let adv = logloss_core(&batch, &logits, &config, Some(&w)).unwrap();
            let mb = min_buildin_loss(&batch, &logits).unwrap();
            adv + config.eta * mb
        };
        let report = check_grads(
            &eval,
            &policy.params,
            &analytic,
            GradCheckSettings::default(),
            3,
        );
        assert!(report.ok(), "{:?}", report.failures);
    }

    #[test]
    fn zero_weight_batches_have_exactly_zero_gradients() {
        let mut batch = synthetic_batch(23, 2, 2, 4, &[25, 25]);
        batch.ret = vec![0.0, 1.0];
        let policy = RecurrentNet::new_policy(4, 6, N_ACTIONS_FULL, 13);
        let value = RecurrentNet::new_value(global_dim(2, 4), 5, 14);
        let config = LossConfig {
            flags: StageFlags {
                use_alpha: false,
                use_min_buildin: false,
                use_buffer_ranking: true,
                use_advantage: false,
            },
            ..LossConfig::default()
        };
        let w = resolve_weights(&batch, &value, &config).unwrap();
        let mut tape = Tape::new();
        let net = TapeNet::bind(&mut tape, &policy);
        let graph = policy_loss_graph(&mut tape, &net, &policy, &batch, &config, &w).unwrap();
        assert_eq!(tape.scalar_value(graph.total), 0.0);
        let grads = tape.backward(graph.total).unwrap();
        for g in net.grads(&tape, &grads) {
            assert!(g.iter().all(|&x| x == 0.0));
        }
    }

    #[test]
    fn identical_observations_get_identical_logits() {
        let mut batch = synthetic_batch(25, 1, 3, 4, &[25]);
        let row_len = 4;
        for t in 0..CHUNK_LEN {
            let base: Vec<f64> =
                batch.obs[t * 3 * row_len..t * 3 * row_len + row_len].to_vec();
            for i in 1..3 {
                batch.obs[(t * 3 + i) * row_len..(t * 3 + i + 1) * row_len]
                    .copy_from_slice(&base);
            }
        }
        for i in 1..3 {
            let src = batch.h0_policy[0..6].to_vec();
            batch.h0_policy[i * 6..(i + 1) * 6].copy_from_slice(&src);
        }
        let policy = RecurrentNet::new_policy(4, 6, N_ACTIONS_FULL, 15);
        let logits = policy_logits(&batch, &policy).unwrap();
        for step in &logits {
            let first = &step[0..N_ACTIONS_FULL];
            for i in 1..3 {
                assert_eq!(first, &step[i * N_ACTIONS_FULL..(i + 1) * N_ACTIONS_FULL]);
            }
        }
    }

    #[test]
    fn value_loss_graph_matches_manual_mse() {
        let batch = synthetic_batch(27, 3, 2, 4, &[25, 11, 25]);
        let mut value = RecurrentNet::new_value(global_dim(2, 4), 5, 16);
        jitter_params(&mut value.params, 0.05, 4);
        let mut tape = Tape::new();
        let net = TapeNet::bind(&mut tape, &value);
        let loss = value_loss_graph(&mut tape, &net, &value, &batch).unwrap();

        let gdim = batch.global_dim();
        let mut h = batch.h0_value.clone();
        let mut expected = 0.0;
        let mut nvalid = 0.0;
        for t in 0..CHUNK_LEN {
            let v = value.step(&batch.global[t * 3 * gdim..(t + 1) * 3 * gdim], 3, &mut h);
            for slot in 0..3 {
                let row = t * 3 + slot;
                if batch.mask[row] == 1.0 {
                    nvalid += 1.0;
                    expected += (v[slot] - batch.targets[row]).powi(2);
                }
            }
        }
        expected /= nvalid;
        assert_abs_diff_eq!(tape.scalar_value(loss), expected, epsilon = 1e-10);

        let grads = tape.backward(loss).unwrap();
        let analytic = net.grads(&tape, &grads);
        let eval = |params: &ParamSet| -> f64 {
            let probe = RecurrentNet {
                input: value.input,
                hidden: value.hidden,
                output: value.output,
                params: params.clone(),
            };
            let mut h = batch.h0_value.clone();
            let mut acc = 0.0;
            let mut count = 0.0;
            for t in 0..CHUNK_LEN {
                let v = probe.step(&batch.global[t * 3 * gdim..(t + 1) * 3 * gdim], 3, &mut h);
                for slot in 0..3 {
                    let row = t * 3 + slot;
                    if batch.mask[row] == 1.0 {
                        count += 1.0;
                        acc += (v[slot] - batch.targets[row]).powi(2);
                    }
                }
            }
            acc / count
        };
        let report = check_grads(
            &eval,
            &value.params,
            &analytic,
            GradCheckSettings::default(),
            5,
        );
        assert!(report.ok(), "{:?}", report.failures);
    }
}
