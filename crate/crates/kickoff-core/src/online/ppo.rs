//! Clipped-surrogate policy optimization over recurrent chunk graphs.
//!
//! One update consumes a rollout batch: GAE advantages (normalized per
//! batch), clipped probability ratios against the recorded behavior
//! log-probs, an entropy bonus, and a clipped value loss against normalized
//! return targets. Hidden states replay from the recorded chunk checkpoints
//! with episode boundaries zeroing the carried state, exactly as during
//! collection.

use std::path::PathBuf;

use crate::data::CHUNK_LEN;
use crate::nn::tape::{Tape, Var};
use crate::nn::{Adam, AdamConfig, PolicyNet, TapeNet, ValueNet};
use crate::online::gae::{gae, normalize_advantages, ValueNormalizer};
use crate::online::rollout::RolloutBatch;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum InitMode {
    Pretrained(PathBuf),
    Scratch,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneConfig {
    pub gamma: f64,
    pub lambda: f64,
    pub clip: f64,
    pub rollout_len: usize,
    pub parallel_envs: usize,
    pub epochs_per_batch: usize,
    pub entropy_coef: f64,
    pub value_coef: f64,
    pub lr: f64,
    pub hidden: usize,
    /// Standardize value targets with running statistics instead of
    /// PopArt-style weight rescaling.
    pub normalize_values: bool,
    pub init: InitMode,
    pub eval_rounds: usize,
    pub eval_interval: u64,
    pub seed: u64,
    pub out_dir: PathBuf,
}

impl Default for FinetuneConfig {
    fn default() -> FinetuneConfig {
        FinetuneConfig {
            gamma: 0.99,
            lambda: 0.95,
            clip: 0.2,
            rollout_len: 50,
            parallel_envs: 64,
            epochs_per_batch: 4,
            entropy_coef: 0.01,
            value_coef: 1.0,
            lr: 1e-4,
            hidden: 256,
            normalize_values: true,
            init: InitMode::Scratch,
            eval_rounds: 64,
            eval_interval: 6400,
            seed: 0,
            out_dir: PathBuf::from("finetune_run"),
        }
    }
}

impl FinetuneConfig {
    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::invalid(format!("gamma must lie in [0, 1], got {}", self.gamma)));
        }
        if !(self.lambda > 0.0 && self.lambda <= 1.0) {
            return Err(Error::invalid(format!(
                "lambda must lie in (0, 1], got {}",
                self.lambda
            )));
        }
        if !(self.clip > 0.0 && self.clip < 1.0) {
            return Err(Error::invalid(format!(
                "clip ratio must lie in (0, 1), got {}",
                self.clip
            )));
        }
        if self.rollout_len == 0 || self.rollout_len % CHUNK_LEN != 0 {
            return Err(Error::invalid(format!(
                "rollout length must be a positive multiple of {CHUNK_LEN}, got {}",
                self.rollout_len
            )));
        }
        if self.parallel_envs == 0 || self.epochs_per_batch == 0 {
            return Err(Error::invalid("parallel envs and epochs per batch must be positive"));
        }
        if self.entropy_coef < 0.0 || self.value_coef < 0.0 {
            return Err(Error::invalid("loss coefficients must be nonnegative"));
        }
        if self.lr <= 0.0 || self.hidden == 0 {
            return Err(Error::invalid("learning rate and hidden size must be positive"));
        }
        if self.eval_rounds == 0 || self.eval_interval == 0 {
            return Err(Error::invalid("eval rounds and interval must be positive"));
        }
        Ok(())
    }
}

pub struct PpoGraph {
    pub total: Var,
    /// Mean clipped surrogate (to be maximized; `total` holds its negation).
    pub surrogate: Var,
    /// Mean of sum_u pi log pi, i.e. negative entropy.
    pub neg_entropy: Var,
    pub value_loss: Var,
    pub ratios: Vec<Var>,
    pub new_logp: Vec<Var>,
}

/// Build the PPO objective for one 25-step chunk on `tape`. `adv_norm`,
/// `target_norm`, and `value_old_norm` are indexed like the batch's
/// per-step-per-env arrays.
#[allow(clippy::too_many_arguments)]
pub fn ppo_chunk_graph(
    tape: &mut Tape,
    policy_net: &TapeNet,
    value_net: &TapeNet,
    policy: &PolicyNet,
    value: &ValueNet,
    batch: &RolloutBatch,
    chunk: usize,
    adv_norm: &[f64],
    target_norm: &[f64],
    value_old_norm: &[f64],
    config: &FinetuneConfig,
) -> Result<PpoGraph> {
    let envs = batch.envs;
    let n = batch.n;
    let rows = envs * n;
    let k = policy.output;
    if policy.input != batch.obs_dim
        || policy.hidden != batch.hidden_policy
        || value.input != batch.global_dim
        || value.hidden != batch.hidden_value
    {
        return Err(Error::ShapeMismatch {
            op: "ppo_chunk_graph",
            lhs: vec![policy.input, policy.hidden, value.input, value.hidden],
            rhs: vec![batch.obs_dim, batch.hidden_policy, batch.global_dim, batch.hidden_value],
        });
    }
    if chunk >= batch.chunks() {
        return Err(Error::invalid(format!(
            "chunk {chunk} out of range for a {}-step rollout",
            batch.steps
        )));
    }

    let hp = policy.hidden;
    let hv = value.hidden;
    let mut h_p = tape.constant_from(
        rows,
        hp,
        batch.h_policy_checkpoints[chunk * rows * hp..(chunk + 1) * rows * hp].to_vec(),
    );
    let mut h_v = tape.constant_from(
        envs,
        hv,
        batch.h_value_checkpoints[chunk * envs * hv..(chunk + 1) * envs * hv].to_vec(),
    );

    let per_row = 1.0 / (CHUNK_LEN * rows) as f64;
    let per_env = 1.0 / (CHUNK_LEN * envs) as f64;
    let mut surrogate: Option<Var> = None;
    let mut neg_entropy: Option<Var> = None;
    let mut value_loss: Option<Var> = None;
    let mut ratios = Vec::with_capacity(CHUNK_LEN);
    let mut new_logp = Vec::with_capacity(CHUNK_LEN);
    let acc = |slot: &mut Option<Var>, tape: &mut Tape, term: Var| -> Result<()> {
        *slot = Some(match slot.take() {
            Some(prev) => tape.add(prev, term)?,
            None => term,
        });
        Ok(())
    };

    for t in chunk * CHUNK_LEN..(chunk + 1) * CHUNK_LEN {
        let x = tape.constant_from(
            rows,
            batch.obs_dim,
            batch.obs[t * rows * batch.obs_dim..(t + 1) * rows * batch.obs_dim].to_vec(),
        );
        h_p = policy_net.trunk_step(tape, x, h_p)?;
        let logits = policy_net.head(tape, h_p)?;
        let lsm = tape.log_softmax_rows(logits)?;

        let idx: Vec<usize> =
            (0..rows).map(|r| batch.actions[t * rows + r] as usize).collect();
        if idx.iter().any(|&a| a >= k) {
            return Err(Error::invalid(format!("action out of range for {k} outputs")));
        }
        let picked = tape.gather_cols(lsm, &idx)?;
        new_logp.push(picked);
        let old = tape.constant_from(
            rows,
            1,
            batch.behavior_logp[t * rows..(t + 1) * rows].to_vec(),
        );
        let logdiff = tape.sub(picked, old)?;
        let ratio = tape.exp(logdiff)?;
        ratios.push(ratio);

        let adv: Vec<f64> = (0..rows).map(|r| adv_norm[t * envs + r / n]).collect();
        let advc = tape.constant_from(rows, 1, adv);
        let straight = tape.mul(ratio, advc)?;
        let clipped = tape.clip(ratio, 1.0 - config.clip, 1.0 + config.clip)?;
        let clipped_term = tape.mul(clipped, advc)?;
        let pessimistic = tape.min(straight, clipped_term)?;
        let surr_t = tape.weighted_sum(pessimistic, &vec![per_row; rows])?;
        acc(&mut surrogate, tape, surr_t)?;

        let probs = tape.exp(lsm)?;
        let plogp = tape.mul(probs, lsm)?;
        let ent_t = tape.weighted_sum(plogp, &vec![per_row; rows * k])?;
        acc(&mut neg_entropy, tape, ent_t)?;

        let g = tape.constant_from(
            envs,
            batch.global_dim,
            batch.global[t * envs * batch.global_dim..(t + 1) * envs * batch.global_dim]
                .to_vec(),
        );
        h_v = value_net.trunk_step(tape, g, h_v)?;
        let v = value_net.head(tape, h_v)?;
        let v_old = tape.constant_from(
            envs,
            1,
            (0..envs).map(|b| value_old_norm[t * envs + b]).collect(),
        );
        let tgt = tape.constant_from(
            envs,
            1,
            (0..envs).map(|b| target_norm[t * envs + b]).collect(),
        );
        let v_delta = tape.sub(v, v_old)?;
        let v_delta_clipped = tape.clip(v_delta, -config.clip, config.clip)?;
        let v_clipped = tape.add(v_old, v_delta_clipped)?;
        let err = tape.sub(v, tgt)?;
        let err_sq = tape.mul(err, err)?;
        let err_clip = tape.sub(v_clipped, tgt)?;
        let err_clip_sq = tape.mul(err_clip, err_clip)?;
        let worst = tape.max(err_sq, err_clip_sq)?;
        let v_t = tape.weighted_sum(worst, &vec![per_env; envs])?;
        acc(&mut value_loss, tape, v_t)?;

        let any_done = (0..envs).any(|b| batch.dones[t * envs + b]);
        if any_done {
            let keep_rows: Vec<f64> = (0..rows * hp)
                .map(|i| if batch.dones[t * envs + i / hp / n] { 0.0 } else { 1.0 })
                .collect();
            let keep_p = tape.constant_from(rows, hp, keep_rows);
            h_p = tape.mul(h_p, keep_p)?;
            let keep_vals: Vec<f64> = (0..envs * hv)
                .map(|i| if batch.dones[t * envs + i / hv] { 0.0 } else { 1.0 })
                .collect();
            let keep_v = tape.constant_from(envs, hv, keep_vals);
            h_v = tape.mul(h_v, keep_v)?;
        }
    }

    let surrogate = surrogate.expect("25 steps accumulated");
    let neg_entropy = neg_entropy.expect("25 steps accumulated");
    let value_loss = value_loss.expect("25 steps accumulated");
    let mut total = tape.scale(surrogate, -1.0)?;
    if config.entropy_coef != 0.0 {
        let ent_term = tape.scale(neg_entropy, config.entropy_coef)?;
        total = tape.add(total, ent_term)?;
    }
    if config.value_coef != 0.0 {
        let value_term = tape.scale(value_loss, config.value_coef)?;
        total = tape.add(total, value_term)?;
    }
    Ok(PpoGraph { total, surrogate, neg_entropy, value_loss, ratios, new_logp })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PpoMetrics {
    pub surrogate: f64,
    pub value_loss: f64,
    pub entropy: f64,
    pub approx_kl: f64,
    pub clip_fraction: f64,
    pub ratio_max: f64,
    pub updates: usize,
}

pub struct PpoTrainer {
    pub policy: PolicyNet,
    pub value: ValueNet,
    pub normalizer: ValueNormalizer,
    pub config: FinetuneConfig,
    opt_policy: Adam,
    opt_value: Adam,
}

impl PpoTrainer {
    pub fn new(policy: PolicyNet, value: ValueNet, config: FinetuneConfig) -> Result<PpoTrainer> {
        config.validate()?;
        let opt_policy = Adam::new(&policy.params, AdamConfig::with_lr(config.lr));
        let opt_value = Adam::new(&value.params, AdamConfig::with_lr(config.lr));
        let normalizer = ValueNormalizer::new(config.normalize_values);
        Ok(PpoTrainer { policy, value, normalizer, config, opt_policy, opt_value })
    }

    /// Advantages and return targets for `batch` under the current config,
    /// already normalized for graph consumption: (advantages, targets,
    /// old values), each indexed `[t * envs + b]`.
    pub fn prepare(&mut self, batch: &RolloutBatch) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
        let envs = batch.envs;
        let steps = batch.steps;
        let mut adv = vec![0.0; steps * envs];
        let mut returns = vec![0.0; steps * envs];
        for b in 0..envs {
            let rewards: Vec<f64> = (0..steps).map(|t| batch.rewards[t * envs + b]).collect();
            let values: Vec<f64> = (0..steps).map(|t| batch.values[t * envs + b]).collect();
            let dones: Vec<bool> = (0..steps).map(|t| batch.dones[t * envs + b]).collect();
            let a = gae(
                &rewards,
                &values,
                &dones,
                batch.bootstrap[b],
                self.config.gamma,
                self.config.lambda,
            )?;
            for t in 0..steps {
                adv[t * envs + b] = a[t];
                returns[t * envs + b] = a[t] + values[t];
            }
        }
        self.normalizer.update(&returns);
        normalize_advantages(&mut adv)?;
        let targets: Vec<f64> = returns.iter().map(|&r| self.normalizer.normalize(r)).collect();
        let old: Vec<f64> = batch.values.iter().map(|&v| self.normalizer.normalize(v)).collect();
        Ok((adv, targets, old))
    }

    pub fn ppo_update(&mut self, batch: &RolloutBatch) -> Result<PpoMetrics> {
        let (adv, targets, old) = self.prepare(batch)?;
        let mut metrics = PpoMetrics {
            surrogate: 0.0,
            value_loss: 0.0,
            entropy: 0.0,
            approx_kl: 0.0,
            clip_fraction: 0.0,
            ratio_max: f64::NEG_INFINITY,
            updates: 0,
        };
        for _ in 0..self.config.epochs_per_batch {
            for chunk in 0..batch.chunks() {
                let mut tape = Tape::new();
                let tp = TapeNet::bind(&mut tape, &self.policy);
                let tv = TapeNet::bind(&mut tape, &self.value);
                let graph = ppo_chunk_graph(
                    &mut tape,
                    &tp,
                    &tv,
                    &self.policy,
                    &self.value,
                    batch,
                    chunk,
                    &adv,
                    &targets,
                    &old,
                    &self.config,
                )?;

                let mut clipped = 0usize;
                let mut count = 0usize;
                for (step_in_chunk, rv) in graph.ratios.iter().enumerate() {
                    for (r_idx, &r) in tape.value(*rv).iter().enumerate() {
                        if !r.is_finite() {
                            return Err(Error::invalid(format!(
                                "non-finite ratio {r} at chunk {chunk} step {step_in_chunk} row {r_idx}"
                            )));
                        }
                        if (r - 1.0).abs() > self.config.clip {
                            clipped += 1;
                        }
                        metrics.ratio_max = metrics.ratio_max.max(r);
                        count += 1;
                    }
                }
                metrics.clip_fraction += clipped as f64 / count as f64;

                let rows = batch.envs * batch.n;
                let mut kl = 0.0;
                for (step_in_chunk, lp) in graph.new_logp.iter().enumerate() {
                    let t = chunk * CHUNK_LEN + step_in_chunk;
                    let new = tape.value(*lp);
                    for r in 0..rows {
                        kl += batch.behavior_logp[t * rows + r] - new[r];
                    }
                }
                metrics.approx_kl += kl / (CHUNK_LEN * rows) as f64;

                metrics.surrogate += tape.scalar_value(graph.surrogate);
                metrics.value_loss += tape.scalar_value(graph.value_loss);
                metrics.entropy -= tape.scalar_value(graph.neg_entropy);

                let grads = tape.backward(graph.total)?;
                let policy_grads = tp.grads(&tape, &grads);
                let value_grads = tv.grads(&tape, &grads);
                self.opt_policy.step(&mut self.policy.params, &policy_grads)?;
                self.opt_value.step(&mut self.value.params, &value_grads)?;
                metrics.updates += 1;
            }
        }
        let u = metrics.updates as f64;
        metrics.surrogate /= u;
        metrics.value_loss /= u;
        metrics.entropy /= u;
        metrics.approx_kl /= u;
        metrics.clip_fraction /= u;
        Ok(metrics)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::{obs_dim, PitchConfig, N_ACTIONS_ACADEMY};
    use crate::nn::gradcheck::{check_grads, jitter_params, GradCheckSettings};
    use crate::nn::{kernels, ParamSet, RecurrentNet};
    use crate::online::rollout::EnvPool;

    fn small_config() -> FinetuneConfig {
        FinetuneConfig {
            rollout_len: 25,
            parallel_envs: 3,
            epochs_per_batch: 1,
            hidden: 6,
            lr: 1e-3,
            eval_interval: 75,
            out_dir: PathBuf::from("unused"),
            ..FinetuneConfig::default()
        }
    }

    fn collected_batch(seed: u64, steps: usize, envs: usize) -> (RolloutBatch, PolicyNet, ValueNet) {
        let c = PitchConfig::academy("counter_attack", 0).unwrap();
        let dim = obs_dim(&c);
        let n = c.players_per_team;
        let policy = RecurrentNet::new_policy(dim, 6, N_ACTIONS_ACADEMY, seed);
        let value = RecurrentNet::new_value(n * dim + 2, 5, seed + 1);
        let mut pool = EnvPool::new(&c, envs, 6, 5, seed).unwrap();
        let norm = ValueNormalizer::new(true);
        let batch = pool.collect(&policy, &value, &norm, steps).unwrap();
        (batch, policy, value)
    }

    #[test]
    fn first_epoch_ratios_are_one_and_surrogate_vanishes() {
        let (batch, policy, value) = collected_batch(4, 25, 3);
        let mut cfg = small_config();
        cfg.hidden = 6;
        let mut trainer = PpoTrainer::new(policy, value, cfg).unwrap();
        let metrics = trainer.ppo_update(&batch).unwrap();
        assert!(
            metrics.surrogate.abs() < 1e-10,
            "ratio-1 surrogate should equal mean normalized advantage, got {}",
            metrics.surrogate
        );
        assert!(metrics.clip_fraction == 0.0);
        assert!((metrics.ratio_max - 1.0).abs() < 1e-12);
        assert!(metrics.approx_kl.abs() < 1e-12);
        assert!(metrics.entropy > 0.0);
    }

    #[test]
    fn graph_values_match_a_scalar_replay_oracle() {
        let (mut batch, mut policy, value) = collected_batch(8, 50, 2);
        jitter_params(&mut policy.params, 0.05, 91);
        for (i, v) in batch.values.iter_mut().enumerate() {
            *v += (i as f64 * 0.37).sin();
        }
        let mut trainer = PpoTrainer::new(policy, value, small_config()).unwrap();
        let (adv, targets, old) = trainer.prepare(&batch).unwrap();

        let rows = batch.envs * batch.n;
        let k = trainer.policy.output;
        let eps = trainer.config.clip;
        for chunk in 0..batch.chunks() {
            let mut tape = Tape::new();
            let tp = TapeNet::bind(&mut tape, &trainer.policy);
            let tv = TapeNet::bind(&mut tape, &trainer.value);
            let graph = ppo_chunk_graph(
                &mut tape,
                &tp,
                &tv,
                &trainer.policy,
                &trainer.value,
                &batch,
                chunk,
                &adv,
                &targets,
                &old,
                &trainer.config,
            )
            .unwrap();

            let hp = batch.hidden_policy;
            let hv = batch.hidden_value;
            let mut h_p = batch.h_policy_checkpoints[chunk * rows * hp..(chunk + 1) * rows * hp]
                .to_vec();
            let mut h_v = batch.h_value_checkpoints
                [chunk * batch.envs * hv..(chunk + 1) * batch.envs * hv]
                .to_vec();
            let mut surr = 0.0;
            let mut negent = 0.0;
            let mut vloss = 0.0;
            let mut lsm = vec![0.0; rows * k];
            for t in chunk * CHUNK_LEN..(chunk + 1) * CHUNK_LEN {
                let xs = &batch.obs[t * rows * batch.obs_dim..(t + 1) * rows * batch.obs_dim];
                let logits = trainer.policy.step(xs, rows, &mut h_p);
                kernels::log_softmax_rows(&logits, &mut lsm, rows, k);
                for r in 0..rows {
                    let a = batch.actions[t * rows + r] as usize;
                    let ratio = (lsm[r * k + a] - batch.behavior_logp[t * rows + r]).exp();
                    let a_hat = adv[t * batch.envs + r / batch.n];
                    let clipped = ratio.clamp(1.0 - eps, 1.0 + eps);
                    surr += (ratio * a_hat).min(clipped * a_hat) / (CHUNK_LEN * rows) as f64;
                    for u in 0..k {
                        negent += lsm[r * k + u].exp() * lsm[r * k + u] / (CHUNK_LEN * rows) as f64;
                    }
                }
                let g = &batch.global
                    [t * batch.envs * batch.global_dim..(t + 1) * batch.envs * batch.global_dim];
                let v = trainer.value.step(g, batch.envs, &mut h_v);
                for b in 0..batch.envs {
                    let vo = old[t * batch.envs + b];
                    let tg = targets[t * batch.envs + b];
                    let vc = vo + (v[b] - vo).clamp(-eps, eps);
                    let worst = ((v[b] - tg) * (v[b] - tg)).max((vc - tg) * (vc - tg));
                    vloss += worst / (CHUNK_LEN * batch.envs) as f64;
                    if batch.dones[t * batch.envs + b] {
                        h_v[b * hv..(b + 1) * hv].fill(0.0);
                        h_p[b * batch.n * hp..(b + 1) * batch.n * hp].fill(0.0);
                    }
                }
            }
            assert!((tape.scalar_value(graph.surrogate) - surr).abs() < 1e-10);
            assert!((tape.scalar_value(graph.neg_entropy) - negent).abs() < 1e-10);
            assert!((tape.scalar_value(graph.value_loss) - vloss).abs() < 1e-10);
        }
    }

    #[test]
    fn ratio_exactly_at_the_clip_bound_is_not_cut() {
        let (mut batch, policy, value) = collected_batch(14, 25, 2);
        let cfg = small_config();
        let eps = cfg.clip;
        let rows = batch.envs * batch.n;
        let k = policy.output;
        let mut h = batch.h_policy_checkpoints.clone();
        let mut lsm = vec![0.0; rows * k];
        for t in 0..batch.steps {
            let xs = &batch.obs[t * rows * batch.obs_dim..(t + 1) * rows * batch.obs_dim];
            let logits = policy.step(xs, rows, &mut h);
            kernels::log_softmax_rows(&logits, &mut lsm, rows, k);
            for r in 0..rows {
                let a = batch.actions[t * rows + r] as usize;
                batch.behavior_logp[t * rows + r] = lsm[r * k + a] - (1.0 + eps).ln();
            }
            for b in 0..batch.envs {
                if batch.dones[t * batch.envs + b] {
                    h[b * batch.n * batch.hidden_policy..(b + 1) * batch.n * batch.hidden_policy]
                        .fill(0.0);
                }
            }
        }

        let envs = batch.envs;
        let adv: Vec<f64> = (0..batch.steps * envs).map(|i| 0.5 + (i % 7) as f64 * 0.25).collect();
        let targets = vec![0.0; batch.steps * envs];
        let old = vec![0.0; batch.steps * envs];
        let mut tape = Tape::new();
        let tp = TapeNet::bind(&mut tape, &policy);
        let tv = TapeNet::bind(&mut tape, &value);
        let graph = ppo_chunk_graph(
            &mut tape, &tp, &tv, &policy, &value, &batch, 0, &adv, &targets, &old, &cfg,
        )
        .unwrap();

        let mut expect = 0.0;
        for t in 0..batch.steps {
            for r in 0..rows {
                expect += (1.0 + eps) * adv[t * envs + r / batch.n] / (CHUNK_LEN * rows) as f64;
            }
        }
        let got = tape.scalar_value(graph.surrogate);
        assert!(
            (got - expect).abs() < 1e-9,
            "at the bound the clipped and raw terms coincide: {got} vs {expect}"
        );
        for rv in &graph.ratios {
            for &r in tape.value(*rv) {
                assert!((r - (1.0 + eps)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn huge_clip_single_epoch_gradient_is_vanilla_policy_gradient() {
        let (batch, policy, value) = collected_batch(21, 25, 2);
        let mut cfg = small_config();
        cfg.clip = 0.999;
        cfg.entropy_coef = 0.0;
        cfg.value_coef = 0.0;
        let envs = batch.envs;
        let rows = envs * batch.n;
        let adv: Vec<f64> = (0..batch.steps * envs).map(|i| ((i * 31 % 11) as f64) - 5.0).collect();
        let targets = vec![0.0; batch.steps * envs];
        let old = vec![0.0; batch.steps * envs];

        let mut tape = Tape::new();
        let tp = TapeNet::bind(&mut tape, &policy);
        let tv = TapeNet::bind(&mut tape, &value);
        let graph = ppo_chunk_graph(
            &mut tape, &tp, &tv, &policy, &value, &batch, 0, &adv, &targets, &old, &cfg,
        )
        .unwrap();
        let ppo_grads = tp.grads(&tape, &tape.backward(graph.total).unwrap());

        let mut tape2 = Tape::new();
        let tp2 = TapeNet::bind(&mut tape2, &policy);
        let hp = batch.hidden_policy;
        let mut h = tape2.constant_from(rows, hp, batch.h_policy_checkpoints[..rows * hp].to_vec());
        let mut loss: Option<Var> = None;
        for t in 0..batch.steps {
            let x = tape2.constant_from(
                rows,
                batch.obs_dim,
                batch.obs[t * rows * batch.obs_dim..(t + 1) * rows * batch.obs_dim].to_vec(),
            );
            h = tp2.trunk_step(&mut tape2, x, h).unwrap();
            let logits = tp2.head(&mut tape2, h).unwrap();
            let lsm = tape2.log_softmax_rows(logits).unwrap();
            let idx: Vec<usize> = (0..rows).map(|r| batch.actions[t * rows + r] as usize).collect();
            let picked = tape2.gather_cols(lsm, &idx).unwrap();
            let coeffs: Vec<f64> = (0..rows)
                .map(|r| -adv[t * envs + r / batch.n] / (CHUNK_LEN * rows) as f64)
                .collect();
            let term = tape2.weighted_sum(picked, &coeffs).unwrap();
            loss = Some(match loss {
                Some(prev) => tape2.add(prev, term).unwrap(),
                None => term,
            });
            let any_done = (0..envs).any(|b| batch.dones[t * envs + b]);
            if any_done {
                let keep: Vec<f64> = (0..rows * hp)
                    .map(|i| if batch.dones[t * envs + i / hp / batch.n] { 0.0 } else { 1.0 })
                    .collect();
                let keepc = tape2.constant_from(rows, hp, keep);
                h = tape2.mul(h, keepc).unwrap();
            }
        }
        let vanilla_grads = tp2.grads(&tape2, &tape2.backward(loss.unwrap()).unwrap());

        for (pg, vg) in ppo_grads.iter().zip(&vanilla_grads) {
            for (a, b) in pg.iter().zip(vg) {
                assert!(
                    (a - b).abs() <= 1e-12 * (1.0 + b.abs()),
                    "ppo {a} vs vanilla {b}"
                );
            }
        }
    }

    #[test]
    fn objective_gradients_pass_finite_difference_checks() {
        let (batch, mut policy, mut value) = collected_batch(33, 25, 2);
        jitter_params(&mut policy.params, 0.05, 6);
        jitter_params(&mut value.params, 0.05, 7);
        let mut cfg = small_config();
        cfg.entropy_coef = 0.02;
        let envs = batch.envs;
        let adv: Vec<f64> = (0..batch.steps * envs).map(|i| ((i % 5) as f64) * 0.5 - 1.0).collect();
        let targets: Vec<f64> =
            (0..batch.steps * envs).map(|i| ((i % 3) as f64) * 0.4 - 0.3).collect();
        let old: Vec<f64> = (0..batch.steps * envs).map(|i| ((i % 4) as f64) * 0.3 - 0.45).collect();

        let build = |p: &PolicyNet, v: &ValueNet| -> (f64, Vec<Vec<f64>>, Vec<Vec<f64>>) {
            let mut tape = Tape::new();
            let tp = TapeNet::bind(&mut tape, p);
            let tv = TapeNet::bind(&mut tape, v);
            let graph =
                ppo_chunk_graph(&mut tape, &tp, &tv, p, v, &batch, 0, &adv, &targets, &old, &cfg)
                    .unwrap();
            let grads = tape.backward(graph.total).unwrap();
            (tape.scalar_value(graph.total), tp.grads(&tape, &grads), tv.grads(&tape, &grads))
        };
        let (_, policy_grads, value_grads) = build(&policy, &value);

        let value_fixed = value.params.clone();
        let policy_eval = |params: &ParamSet| {
            let p = RecurrentNet {
                input: policy.input,
                hidden: policy.hidden,
                output: policy.output,
                params: params.clone(),
            };
            let v = RecurrentNet {
                input: value.input,
                hidden: value.hidden,
                output: value.output,
                params: value_fixed.clone(),
            };
            build(&p, &v).0
        };
        let report = check_grads(
            &policy_eval,
            &policy.params,
            &policy_grads,
            GradCheckSettings::default(),
            40,
        );
        assert!(report.ok(), "policy gradients: {report:?}");

        let policy_fixed = policy.params.clone();
        let value_eval = |params: &ParamSet| {
            let p = RecurrentNet {
                input: policy.input,
                hidden: policy.hidden,
                output: policy.output,
                params: policy_fixed.clone(),
            };
            let v = RecurrentNet {
                input: value.input,
                hidden: value.hidden,
                output: value.output,
                params: params.clone(),
            };
            build(&p, &v).0
        };
        let report = check_grads(
            &value_eval,
            &value.params,
            &value_grads,
            GradCheckSettings::default(),
            41,
        );
        assert!(report.ok(), "value gradients: {report:?}");
    }

    #[test]
    fn multiple_epochs_step_the_parameters() {
        let (batch, policy, value) = collected_batch(2, 50, 3);
        let before = policy.params.clone();
        let mut cfg = small_config();
        cfg.epochs_per_batch = 2;
        cfg.parallel_envs = 3;
        cfg.rollout_len = 50;
        let mut trainer = PpoTrainer::new(policy, value, cfg).unwrap();
        let metrics = trainer.ppo_update(&batch).unwrap();
        assert_eq!(metrics.updates, 4);
        assert!(metrics.value_loss.is_finite());
        assert!(trainer.policy.params.max_abs_diff(&before).unwrap() > 0.0);
    }

    #[test]
    fn corrupt_behavior_log_probs_abort_the_update() {
        let (mut batch, policy, value) = collected_batch(3, 25, 2);
        batch.behavior_logp[5] = -1e9;
        let mut trainer = PpoTrainer::new(policy, value, small_config()).unwrap();
        let err = trainer.ppo_update(&batch).unwrap_err();
        assert!(err.to_string().contains("non-finite"), "got: {err}");
    }

    #[test]
    fn config_invariants_are_enforced() {
        let ok = FinetuneConfig::default();
        assert!(ok.validate().is_ok());
        for bad in [
            FinetuneConfig { lambda: 0.0, ..ok.clone() },
            FinetuneConfig { lambda: 1.2, ..ok.clone() },
            FinetuneConfig { clip: 0.0, ..ok.clone() },
            FinetuneConfig { clip: 1.0, ..ok.clone() },
            FinetuneConfig { rollout_len: 30, ..ok.clone() },
            FinetuneConfig { gamma: -0.1, ..ok.clone() },
            FinetuneConfig { epochs_per_batch: 0, ..ok.clone() },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
