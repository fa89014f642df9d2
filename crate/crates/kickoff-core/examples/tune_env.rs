use kickoff_core::env::{
    designated_player, expert_policy, reset, scripted_controller, step_joint, Action, Event,
    PitchConfig, Possession, TeamId,
};
use std::time::Instant;

fn team_actions(
    config: &PitchConfig,
    state: &kickoff_core::env::GameState,
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

#[derive(Default)]
struct Tally {
    saves: u64,
    steals: u64,
    intercepts: u64,
    goal_rows: std::collections::BTreeMap<i32, u64>,
    first_goal_steps: Vec<u32>,
}

fn play(
    config: &PitchConfig,
    expert_a: bool,
    expert_b: bool,
    tally: Option<&mut Tally>,
) -> (i32, i32, u32, TeamId) {
    let mut s = reset(config).unwrap();
    let kicking = match s.possession {
        Possession::Held { team, .. } => team,
        _ => TeamId::A,
    };
    let mut steps = 0;
    let mut first_goal: Option<u32> = None;
    let mut saves = 0u64;
    let mut steals = 0u64;
    let mut intercepts = 0u64;
    let mut goal_rows: Vec<i32> = Vec::new();
    loop {
        let aa = team_actions(config, &s, TeamId::A, expert_a);
        let ab = team_actions(config, &s, TeamId::B, expert_b);
        let pre_ball = s.ball;
        let out = step_joint(config, &mut s, &aa, &ab).unwrap();
        steps += 1;
        for e in &out.events {
            match e {
                Event::Goal { .. } => {
                    goal_rows.push(pre_ball.1);
                    if first_goal.is_none() {
                        first_goal = Some(steps);
                    }
                }
                Event::Save { .. } => saves += 1,
                Event::Steal { .. } => steals += 1,
                Event::Intercept { .. } => intercepts += 1,
            }
        }
        if out.done {
            break;
        }
    }
    if let Some(t) = tally {
        t.saves += saves;
        t.steals += steals;
        t.intercepts += intercepts;
        for r in goal_rows {
            *t.goal_rows.entry(r).or_insert(0) += 1;
        }
        if let Some(fg) = first_goal {
            t.first_goal_steps.push(fg);
        }
    }
    (s.score.0 as i32, s.score.1 as i32, steps, kicking)
}

fn main() {
    let rounds: usize = std::env::args()
        .nth(1)
        .and_then(|s| s.parse().ok())
        .unwrap_or(200);

    let t0 = Instant::now();
    let mut diffs: Vec<f64> = Vec::new();
    let mut total_goals = 0;
    let mut draws = 0;
    let mut steps_total = 0u64;
    let mut kick_diff_sum = 0.0;
    let mut tally = Tally::default();
    for seed in 0..rounds as u64 {
        let c = PitchConfig::full_game(4, seed);
        let (ga, gb, steps, kicking) = play(&c, false, false, Some(&mut tally));
        diffs.push((ga - gb) as f64);
        total_goals += ga + gb;
        if ga == gb {
            draws += 1;
        }
        steps_total += steps as u64;
        kick_diff_sum += match kicking {
            TeamId::A => (ga - gb) as f64,
            TeamId::B => (gb - ga) as f64,
        };
    }
    let dt = t0.elapsed().as_secs_f64();
    let n = rounds as f64;
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / n;
    println!(
        "scripted vs scripted over {rounds}: mean diff {:+.4} (sd {:.2}, se {:.3}), goals/match {:.2}, draw rate {:.3}, {:.0} steps/s",
        mean,
        var.sqrt(),
        (var / n).sqrt(),
        total_goals as f64 / n,
        draws as f64 / n,
        steps_total as f64 / dt
    );
    println!(
        "  kicking-team mean diff {:+.4}, saves/match {:.1}, steals/match {:.1}, intercepts/match {:.1}",
        kick_diff_sum / n,
        tally.saves as f64 / n,
        tally.steals as f64 / n,
        tally.intercepts as f64 / n,
    );
    println!("  goal shooter rows: {:?}", tally.goal_rows);

    let mut wins = 0;
    let mut draws = 0;
    let mut losses = 0;
    let mut diff_sum = 0.0;
    for seed in 0..rounds as u64 {
        let c = PitchConfig::full_game(4, 10_000 + seed);
        let (ga, gb, _, _) = play(&c, seed % 2 == 0, seed % 2 == 1, None);
        let (us, them) = if seed % 2 == 0 { (ga, gb) } else { (gb, ga) };
        if us > them {
            wins += 1;
        } else if us == them {
            draws += 1;
        } else {
            losses += 1;
        }
        diff_sum += (us - them) as f64;
    }
    println!(
        "expert vs scripted over {rounds}: win {:.3} draw {:.3} loss {:.3}, mean diff {:+.3}",
        wins as f64 / rounds as f64,
        draws as f64 / rounds as f64,
        losses as f64 / rounds as f64,
        diff_sum / rounds as f64
    );

    for name in ["counter_attack", "three_vs_one"] {
        academy_report(name, 300, true);
        academy_report(name, 300, false);
    }
}

#[allow(dead_code)]
fn academy_report(name: &str, rounds: u64, expert: bool) {
    let mut goals = 0u32;
    let mut steps_sum = 0u64;
    for seed in 0..rounds {
        let c = PitchConfig::academy(name, 40_000 + seed).unwrap();
        let (ga, _gb, steps, _) = play(&c, expert, false, None);
        goals += ga as u32;
        steps_sum += steps as u64;
    }
    println!(
        "academy {name} (expert={expert}) over {rounds}: goal rate {:.3}, mean steps {:.1}",
        goals as f64 / rounds as f64,
        steps_sum as f64 / rounds as f64
    );
}
