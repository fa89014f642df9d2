//! Head-to-head match harness.
//!
//! Policies act greedily from their own local observations; scripted and
//! expert sides reuse the env controllers. Sides alternate between rounds so
//! kickoff and frame asymmetries cancel out of aggregate statistics.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::{
    build_observation, designated_player, expert_policy, obs_dim, reset, scripted_controller,
    step_joint, Action, GameState, PitchConfig, TeamId, N_ACTIONS_ACADEMY, N_ACTIONS_FULL,
};
use crate::eval::report::MatchResult;
use crate::nn::PolicyNet;
use crate::{Error, Result};

#[derive(Clone, Copy)]
pub enum Participant<'a> {
    /// Every player runs the build-in rule controller.
    Scripted,
    /// Scripted, but each player's decision is replaced by a uniformly random
    /// non-delegating action with this probability.
    ScriptedNoisy(f64),
    /// The designated player follows the demonstration expert, the rest stay
    /// scripted.
    ExpertDesignated,
    /// A recurrent policy controls every player, acting by argmax.
    Policy(&'a PolicyNet),
}

impl Participant<'_> {
    fn check(&self, config: &PitchConfig) -> Result<()> {
        match self {
            Participant::ScriptedNoisy(p) => {
                if !(0.0..=1.0).contains(p) {
                    return Err(Error::invalid(format!(
                        "noise level must lie in [0, 1], got {p}"
                    )));
                }
            }
            Participant::Policy(net) => {
                let dim = obs_dim(config);
                if net.input != dim {
                    return Err(Error::invalid(format!(
                        "policy expects {} inputs but observations have {dim}",
                        net.input
                    )));
                }
                let actions = if config.buildin_allowed {
                    N_ACTIONS_FULL
                } else {
                    N_ACTIONS_ACADEMY
                };
                if net.output != actions {
                    return Err(Error::invalid(format!(
                        "policy emits {} actions but this pitch plays {actions}",
                        net.output
                    )));
                }
            }
            _ => {}
        }
        Ok(())
    }
}

struct Runner<'a> {
    participant: Participant<'a>,
    hidden: Vec<f64>,
    rng: ChaCha8Rng,
}

impl<'a> Runner<'a> {
    fn new(participant: Participant<'a>, players: usize, round_seed: u64, side_salt: u64) -> Self {
        let hidden = match participant {
            Participant::Policy(net) => vec![0.0; players * net.hidden],
            _ => Vec::new(),
        };
        Runner {
            participant,
            hidden,
            rng: ChaCha8Rng::seed_from_u64(mix(round_seed, side_salt)),
        }
    }

    fn act(&mut self, config: &PitchConfig, state: &GameState, team: TeamId) -> Result<Vec<Action>> {
        let n = state.team(team).len();
        match self.participant {
            Participant::Scripted => {
                Ok((0..n).map(|i| scripted_controller(config, state, team, i)).collect())
            }
            Participant::ScriptedNoisy(p) => (0..n)
                .map(|i| {
                    if self.rng.gen::<f64>() < p {
                        Action::from_index(self.rng.gen_range(0..N_ACTIONS_ACADEMY))
                    } else {
                        Ok(scripted_controller(config, state, team, i))
                    }
                })
                .collect(),
            Participant::ExpertDesignated => {
                let designated = designated_player(state, team);
                Ok((0..n)
                    .map(|i| {
                        if i == designated {
                            expert_policy(config, state, team)
                        } else {
                            scripted_controller(config, state, team, i)
                        }
                    })
                    .collect())
            }
            Participant::Policy(net) => {
                let dim = net.input;
                let mut xs = vec![0.0; n * dim];
                for i in 0..n {
                    let obs = build_observation(config, state, team, i);
                    xs[i * dim..(i + 1) * dim].copy_from_slice(&obs);
                }
                let logits = net.step(&xs, n, &mut self.hidden);
                (0..n)
                    .map(|i| {
                        let row = &logits[i * net.output..(i + 1) * net.output];
                        let best = row
                            .iter()
                            .enumerate()
                            .max_by(|a, b| a.1.total_cmp(b.1))
                            .map(|(k, _)| k)
                            .unwrap_or(0);
                        Action::from_index(best)
                    })
                    .collect()
            }
        }
    }
}

fn mix(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Play `rounds` games between `a` and `b`, alternating which side of the
/// pitch `a` occupies. Results are reported from `a`'s perspective.
pub fn play_match(
    config: &PitchConfig,
    a: Participant,
    b: Participant,
    rounds: usize,
    steps_per_round: u32,
    seed: u64,
) -> Result<Vec<MatchResult>> {
    config.validate()?;
    if rounds == 0 || steps_per_round == 0 {
        return Err(Error::invalid("rounds and steps per round must be positive"));
    }
    a.check(config)?;
    b.check(config)?;

    let mut results = Vec::with_capacity(rounds);
    for round in 0..rounds {
        let mut cfg = config.clone();
        cfg.episode_len = steps_per_round;
        cfg.seed = mix(seed, round as u64);
        let a_is_home = round % 2 == 0;
        let mut state = reset(&cfg)?;

        let (home, away) = if a_is_home { (a, b) } else { (b, a) };
        let mut home_runner = Runner::new(home, state.team_a.len(), cfg.seed, 0x40_4E);
        let mut away_runner = Runner::new(away, state.team_b.len(), cfg.seed, 0x41_57);

        loop {
            let acts_home = home_runner.act(&cfg, &state, TeamId::A)?;
            let acts_away = away_runner.act(&cfg, &state, TeamId::B)?;
            let out = step_joint(&cfg, &mut state, &acts_home, &acts_away)?;
            if out.done {
                break;
            }
        }

        let (goals_a, goals_b) = if a_is_home {
            (state.score.0, state.score.1)
        } else {
            (state.score.1, state.score.0)
        };
        results.push(MatchResult::new(goals_a, goals_b));
    }
    Ok(results)
}
