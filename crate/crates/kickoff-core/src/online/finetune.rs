//! The fine-tuning driver: alternating rollout collection and PPO updates,
//! with periodic greedy evaluation against the scripted opponent.
//!
//! The learner always controls team A, matching the side it collects rollouts
//! for; academy presets are asymmetric, so evaluating from the away side
//! would measure a different task. Environment steps are counted across the
//! whole pool, so one update batch advances `rollout_len * parallel_envs`
//! steps.

use std::fs;
use std::path::Path;

use crate::env::{
    build_observation, obs_dim, reset, step, Action, PitchConfig, TeamId, N_ACTIONS_ACADEMY,
    N_ACTIONS_FULL,
};
use crate::eval::{aggregate, EvalReport, MatchResult};
use crate::nn::checkpoint::save_params;
use crate::nn::{PolicyNet, RecurrentNet, ValueNet};
use crate::online::load::load_pretrained_except_last;
use crate::online::ppo::{FinetuneConfig, InitMode, PpoTrainer};
use crate::online::rollout::EnvPool;
use crate::{Error, Result};

fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FinetunePoint {
    pub step: u64,
    pub win_rate: f64,
    pub goal_diff: f64,
}

#[derive(Debug, Clone)]
pub struct FinetuneOutcome {
    /// Evaluation curve, starting with a zero-shot point at step 0.
    pub points: Vec<FinetunePoint>,
    pub policy: PolicyNet,
    pub value: ValueNet,
}

/// First recorded step at which the win rate reaches `threshold`, if any.
pub fn steps_to_win_rate(points: &[FinetunePoint], threshold: f64) -> Option<u64> {
    points.iter().find(|p| p.win_rate >= threshold).map(|p| p.step)
}

/// Play `rounds` greedy episodes with the policy driving every team A player
/// and report the aggregate from team A's perspective.
pub fn eval_greedy(
    config: &PitchConfig,
    policy: &PolicyNet,
    rounds: usize,
    seed: u64,
) -> Result<EvalReport> {
    if rounds == 0 {
        return Err(Error::invalid("greedy evaluation needs at least one round"));
    }
    let dim = obs_dim(config);
    let n = config.players_per_team;
    let expected = if config.buildin_allowed { N_ACTIONS_FULL } else { N_ACTIONS_ACADEMY };
    if policy.input != dim || policy.output != expected {
        return Err(Error::ShapeMismatch {
            op: "eval_greedy policy",
            lhs: vec![policy.input, policy.output],
            rhs: vec![dim, expected],
        });
    }

    let mut results = Vec::with_capacity(rounds);
    let mut xs = vec![0.0; n * dim];
    for round in 0..rounds {
        let mut c = config.clone();
        c.seed = mix(seed, round as u64);
        let mut state = reset(&c)?;
        let mut h = vec![0.0; n * policy.hidden];
        loop {
            for i in 0..n {
                let o = build_observation(&c, &state, TeamId::A, i);
                xs[i * dim..(i + 1) * dim].copy_from_slice(&o);
            }
            let logits = policy.step(&xs, n, &mut h);
            let mut acts = Vec::with_capacity(n);
            for i in 0..n {
                let row = &logits[i * policy.output..(i + 1) * policy.output];
                let best = row
                    .iter()
                    .enumerate()
                    .max_by(|a, b| a.1.total_cmp(b.1))
                    .map(|(a, _)| a)
                    .expect("nonempty action row");
                acts.push(Action::from_index(best)?);
            }
            let out = step(&c, &mut state, &acts)?;
            if out.done {
                break;
            }
        }
        results.push(MatchResult::new(state.score.0, state.score.1));
    }
    aggregate(&results)
}

/// Train on `env` for `total_steps` pooled environment steps, evaluating
/// every `eval_interval` steps. Writes `metrics.csv` (one row per
/// evaluation), `policy.ckpt`, and `value.ckpt` into `out_dir`.
pub fn run_finetune(
    env: &PitchConfig,
    config: &FinetuneConfig,
    total_steps: u64,
    out_dir: &Path,
) -> Result<FinetuneOutcome> {
    env.validate()?;
    config.validate()?;
    let steps_per_batch = (config.rollout_len * config.parallel_envs) as u64;
    if config.eval_interval % steps_per_batch != 0 {
        return Err(Error::invalid(format!(
            "eval interval {} must be a multiple of rollout_len * parallel_envs = {steps_per_batch}",
            config.eval_interval
        )));
    }
    if total_steps == 0 || total_steps % config.eval_interval != 0 {
        return Err(Error::invalid(format!(
            "total steps {total_steps} must be a positive multiple of the eval interval {}",
            config.eval_interval
        )));
    }

    let dim = obs_dim(env);
    let n = env.players_per_team;
    let actions = if env.buildin_allowed { N_ACTIONS_FULL } else { N_ACTIONS_ACADEMY };
    let policy = match &config.init {
        InitMode::Scratch => {
            RecurrentNet::new_policy(dim, config.hidden, actions, mix(config.seed, 0x11))
        }
        InitMode::Pretrained(path) => {
            load_pretrained_except_last(path, dim, actions, mix(config.seed, 0x11))?
        }
    };
    let value = RecurrentNet::new_value(n * dim + 2, config.hidden, mix(config.seed, 0x22));

    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let mut pool =
        EnvPool::new(env, config.parallel_envs, policy.hidden, value.hidden, mix(config.seed, 0x33))?;
    let mut trainer = PpoTrainer::new(policy, value, config.clone())?;

    let mut points = Vec::new();
    let zero = eval_greedy(env, &trainer.policy, config.eval_rounds, mix(config.seed, 0xE7A1))?;
    points.push(FinetunePoint {
        step: 0,
        win_rate: zero.win_rate,
        goal_diff: zero.mean_goal_diff,
    });

    let mut csv = String::from("step,win_rate,goal_diff\n");
    let mut steps_done = 0u64;
    let mut evals = 0u64;
    while steps_done < total_steps {
        let batch =
            pool.collect(&trainer.policy, &trainer.value, &trainer.normalizer, config.rollout_len)?;
        trainer.ppo_update(&batch)?;
        steps_done += steps_per_batch;
        if steps_done % config.eval_interval == 0 {
            evals += 1;
            let report = eval_greedy(
                env,
                &trainer.policy,
                config.eval_rounds,
                mix(config.seed, 0xE7A1 + evals),
            )?;
            points.push(FinetunePoint {
                step: steps_done,
                win_rate: report.win_rate,
                goal_diff: report.mean_goal_diff,
            });
            csv.push_str(&format!(
                "{steps_done},{},{}\n",
                report.win_rate, report.mean_goal_diff
            ));
        }
    }

    let metrics_path = out_dir.join("metrics.csv");
    fs::write(&metrics_path, csv).map_err(|e| Error::io(metrics_path.clone(), e))?;
    save_params(&out_dir.join("policy.ckpt"), &trainer.policy.params)?;
    save_params(&out_dir.join("value.ckpt"), &trainer.value.params)?;
    Ok(FinetuneOutcome {
        points,
        policy: trainer.policy,
        value: trainer.value,
    })
}
