//! Monte Carlo gates on the scripted game: self-play side symmetry and
//! expert superiority. These pin the statistical properties the demonstration
//! datasets rely on.

use kickoff_core::env::{
    designated_player, expert_policy, reset, scripted_controller, step_joint, Action, GameState,
    PitchConfig, TeamId,
};

fn team_actions(
    config: &PitchConfig,
    state: &GameState,
    team: TeamId,
    expert: bool,
) -> Vec<Action> {
    let n = state.team(team).len();
    let designated = designated_player(state, team);
    (0..n)
        .map(|i| {
            if expert && i == designated {
                expert_policy(config, state, team)
            } else {
                scripted_controller(config, state, team, i)
            }
        })
        .collect()
}

fn play(config: &PitchConfig, expert_a: bool, expert_b: bool) -> (u32, u32) {
    let mut s = reset(config).unwrap();
    loop {
        let aa = team_actions(config, &s, TeamId::A, expert_a);
        let ab = team_actions(config, &s, TeamId::B, expert_b);
        let out = step_joint(config, &mut s, &aa, &ab).unwrap();
        if out.done {
            return s.score;
        }
    }
}

#[test]
fn scripted_self_play_has_no_side_bias_over_1000_seeds() {
    let mut diff_sum = 0.0;
    for seed in 0..1000u64 {
        let c = PitchConfig::full_game(4, seed);
        let (ga, gb) = play(&c, false, false);
        diff_sum += ga as f64 - gb as f64;
    }
    let mean = diff_sum / 1000.0;
    assert!(
        mean.abs() <= 0.1,
        "mean goal difference {mean:+.4} outside ±0.1"
    );
}

#[test]
fn expert_designation_beats_scripted_with_confidence() {
    for seed_block in 0..5u64 {
        let mut wins = 0u32;
        let rounds = 500u64;
        for round in 0..rounds {
            let c = PitchConfig::full_game(4, 20_000 + seed_block * 100_000 + round);
            let expert_is_a = round % 2 == 0;
            let (ga, gb) = play(&c, expert_is_a, !expert_is_a);
            let (us, them) = if expert_is_a { (ga, gb) } else { (gb, ga) };
            if us > them {
                wins += 1;
            }
        }
        let n = rounds as f64;
        let p = wins as f64 / n;
        let lcb = p - 1.645 * (p * (1.0 - p) / n).sqrt();
        assert!(
            lcb > 0.5,
            "seed block {seed_block}: win rate {p:.3} (95% lower bound {lcb:.3}) not above 0.5"
        );
    }
}
