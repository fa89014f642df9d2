//! On-policy rollout collection across a pool of parallel env instances.
//!
//! All envs advance in lockstep so the policy and value nets run one batched
//! step per tick. Episodes that terminate mid-rollout reset inline with a
//! fresh seed and zeroed recurrent state; recurrent-state checkpoints are
//! recorded every 25 steps so training can rebuild the graph chunk by chunk.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::CHUNK_LEN;
use crate::env::{
    build_observation, obs_dim, reset, step, Action, GameState, PitchConfig,
    N_ACTIONS_ACADEMY, N_ACTIONS_FULL, TeamId,
};
use crate::nn::{kernels, PolicyNet, ValueNet};
use crate::online::gae::ValueNormalizer;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct RolloutBatch {
    pub steps: usize,
    pub envs: usize,
    pub n: usize,
    pub obs_dim: usize,
    pub global_dim: usize,
    pub hidden_policy: usize,
    pub hidden_value: usize,
    /// [steps, envs, n, obs_dim]
    pub obs: Vec<f64>,
    /// [steps, envs, global_dim]
    pub global: Vec<f64>,
    /// [steps, envs, n]
    pub actions: Vec<u8>,
    /// [steps, envs, n], log prob of the sampled action under the behavior net
    pub behavior_logp: Vec<f64>,
    /// [steps, envs]
    pub rewards: Vec<f64>,
    /// [steps, envs]
    pub dones: Vec<bool>,
    /// [steps, envs], denormalized V(s_t) under the behavior value net
    pub values: Vec<f64>,
    /// [envs], denormalized V of the state after the last step
    pub bootstrap: Vec<f64>,
    /// [steps / 25, envs, n, hidden_policy]
    pub h_policy_checkpoints: Vec<f64>,
    /// [steps / 25, envs, hidden_value]
    pub h_value_checkpoints: Vec<f64>,
}

impl RolloutBatch {
    pub fn chunks(&self) -> usize {
        self.steps / CHUNK_LEN
    }
}

pub struct EnvPool {
    pub config: PitchConfig,
    states: Vec<GameState>,
    h_policy: Vec<f64>,
    h_value: Vec<f64>,
    rng: ChaCha8Rng,
    hidden_policy: usize,
    hidden_value: usize,
}

impl EnvPool {
    pub fn new(
        config: &PitchConfig,
        envs: usize,
        hidden_policy: usize,
        hidden_value: usize,
        seed: u64,
    ) -> Result<EnvPool> {
        config.validate()?;
        if envs == 0 {
            return Err(Error::invalid("env pool needs at least one instance"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = config.players_per_team;
        let states = (0..envs)
            .map(|_| {
                let mut c = config.clone();
                c.seed = rng.gen();
                reset(&c)
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(EnvPool {
            config: config.clone(),
            states,
            h_policy: vec![0.0; envs * n * hidden_policy],
            h_value: vec![0.0; envs * hidden_value],
            rng,
            hidden_policy,
            hidden_value,
        })
    }

    pub fn envs(&self) -> usize {
        self.states.len()
    }

    fn fill_inputs(&self, xs: &mut [f64], global: &mut [f64]) {
        let n = self.config.players_per_team;
        let dim = obs_dim(&self.config);
        let gdim = n * dim + 2;
        for (b, state) in self.states.iter().enumerate() {
            for i in 0..n {
                let o = build_observation(&self.config, state, TeamId::A, i);
                let row = b * n + i;
                xs[row * dim..(row + 1) * dim].copy_from_slice(&o);
                global[b * gdim + i * dim..b * gdim + (i + 1) * dim].copy_from_slice(&o);
            }
            let score = (state.score.0 as f64 - state.score.1 as f64) / 5.0;
            let len = self.config.episode_len as f64;
            let clock = (len - state.step as f64) / len;
            global[b * gdim + n * dim] = score;
            global[b * gdim + n * dim + 1] = clock;
        }
    }

    /// Advance every env `steps` ticks under the sampled policy, recording
    /// everything a PPO update needs.
    pub fn collect(
        &mut self,
        policy: &PolicyNet,
        value: &ValueNet,
        normalizer: &ValueNormalizer,
        steps: usize,
    ) -> Result<RolloutBatch> {
        if steps == 0 || steps % CHUNK_LEN != 0 {
            return Err(Error::invalid(format!(
                "rollout length must be a positive multiple of {CHUNK_LEN}, got {steps}"
            )));
        }
        let envs = self.states.len();
        let n = self.config.players_per_team;
        let dim = obs_dim(&self.config);
        let gdim = n * dim + 2;
        let k = policy.output;
        let expected = if self.config.buildin_allowed {
            N_ACTIONS_FULL
        } else {
            N_ACTIONS_ACADEMY
        };
        if policy.input != dim || k != expected {
            return Err(Error::ShapeMismatch {
                op: "rollout policy",
                lhs: vec![policy.input, k],
                rhs: vec![dim, expected],
            });
        }
        if policy.hidden != self.hidden_policy || value.hidden != self.hidden_value {
            return Err(Error::ShapeMismatch {
                op: "rollout hidden state",
                lhs: vec![policy.hidden, value.hidden],
                rhs: vec![self.hidden_policy, self.hidden_value],
            });
        }
        if value.input != gdim {
            return Err(Error::ShapeMismatch {
                op: "rollout value",
                lhs: vec![value.input],
                rhs: vec![gdim],
            });
        }

        let rows = envs * n;
        let mut batch = RolloutBatch {
            steps,
            envs,
            n,
            obs_dim: dim,
            global_dim: gdim,
            hidden_policy: policy.hidden,
            hidden_value: value.hidden,
            obs: vec![0.0; steps * rows * dim],
            global: vec![0.0; steps * envs * gdim],
            actions: vec![0; steps * rows],
            behavior_logp: vec![0.0; steps * rows],
            rewards: vec![0.0; steps * envs],
            dones: vec![false; steps * envs],
            values: vec![0.0; steps * envs],
            bootstrap: vec![0.0; envs],
            h_policy_checkpoints: Vec::with_capacity(steps / CHUNK_LEN * rows * policy.hidden),
            h_value_checkpoints: Vec::with_capacity(steps / CHUNK_LEN * envs * value.hidden),
        };

        let mut xs = vec![0.0; rows * dim];
        let mut global = vec![0.0; envs * gdim];
        let mut lsm = vec![0.0; rows * k];
        for t in 0..steps {
            if t % CHUNK_LEN == 0 {
                batch.h_policy_checkpoints.extend_from_slice(&self.h_policy);
                batch.h_value_checkpoints.extend_from_slice(&self.h_value);
            }
            self.fill_inputs(&mut xs, &mut global);
            batch.obs[t * rows * dim..(t + 1) * rows * dim].copy_from_slice(&xs);
            batch.global[t * envs * gdim..(t + 1) * envs * gdim].copy_from_slice(&global);

            let v = value.step(&global, envs, &mut self.h_value);
            for b in 0..envs {
                batch.values[t * envs + b] = normalizer.denormalize(v[b]);
            }

            let logits = policy.step(&xs, rows, &mut self.h_policy);
            kernels::log_softmax_rows(&logits, &mut lsm, rows, k);
            for b in 0..envs {
                let mut acts = Vec::with_capacity(n);
                for i in 0..n {
                    let row = b * n + i;
                    let u: f64 = self.rng.gen();
                    let mut chosen = k - 1;
                    let mut cum = 0.0;
                    for (a, lp) in lsm[row * k..(row + 1) * k].iter().enumerate() {
                        cum += lp.exp();
                        if u < cum {
                            chosen = a;
                            break;
                        }
                    }
                    batch.actions[t * rows + row] = chosen as u8;
                    batch.behavior_logp[t * rows + row] = lsm[row * k + chosen];
                    acts.push(Action::from_index(chosen)?);
                }
                let out = step(&self.config, &mut self.states[b], &acts)?;
                batch.rewards[t * envs + b] = out.reward;
                batch.dones[t * envs + b] = out.done;
                if out.done {
                    let mut c = self.config.clone();
                    c.seed = self.rng.gen();
                    self.states[b] = reset(&c)?;
                    self.h_policy[b * n * policy.hidden..(b + 1) * n * policy.hidden].fill(0.0);
                    self.h_value[b * value.hidden..(b + 1) * value.hidden].fill(0.0);
                }
            }
        }

        self.fill_inputs(&mut xs, &mut global);
        let mut h_tail = self.h_value.clone();
        let v = value.step(&global, envs, &mut h_tail);
        for b in 0..envs {
            batch.bootstrap[b] = normalizer.denormalize(v[b]);
        }
        Ok(batch)
    }
}
