//! State transition rules: movement, passing, shooting, tackles, pickups.
//!
//! Kinematics are integer-cell: one cell per move (two under sprint), straight
//! ball flight via a symmetric line walk, possession pickup within one cell.
//! All stochasticity flows through the RNG stored in the state, so a fixed
//! seed gives bit-identical trajectories.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;

use crate::env::action::Action;
use crate::env::config::{PitchConfig, SpawnPlan};
use crate::env::controller::scripted_controller;
use crate::env::state::{
    cheb, euclid, goal_x, keeper_pos, Event, GameMode, GameState, Possession, TeamId, TeamState,
};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    /// Goals scored minus goals conceded this step, from team A's view.
    pub reward: f64,
    pub events: Vec<Event>,
    pub done: bool,
}

/// Cells of a straight flight from `from` (exclusive) to `to` (inclusive).
///
/// Uses rounded linear interpolation along the longer axis. Rounding is
/// half-away-from-zero on the signed offsets, which makes the walk commute
/// with pitch mirroring; ordinary Bresenham does not.
pub fn line_cells(from: (i32, i32), to: (i32, i32)) -> Vec<(i32, i32)> {
    let (dx, dy) = (to.0 - from.0, to.1 - from.1);
    let n = dx.abs().max(dy.abs());
    let mut cells = Vec::with_capacity(n as usize);
    for k in 1..=n {
        let fx = (k as f64 * dx as f64 / n as f64).round() as i32;
        let fy = (k as f64 * dy as f64 / n as f64).round() as i32;
        cells.push((from.0 + fx, from.1 + fy));
    }
    cells
}

fn clamp_pos(config: &PitchConfig, p: (i32, i32)) -> (i32, i32) {
    (p.0.clamp(0, config.width - 1), p.1.clamp(0, config.height - 1))
}

fn formation(config: &PitchConfig, team: TeamId, count: usize) -> Vec<(i32, i32)> {
    let x = match team {
        TeamId::A => config.width / 4,
        TeamId::B => config.width - 1 - config.width / 4,
    };
    (0..count)
        .map(|i| {
            let y = config.height * (i as i32 + 1) / (count as i32 + 1);
            clamp_pos(config, (x, y))
        })
        .collect()
}

/// Kickoff spot for a team. Team-relative so that mirroring the pitch maps
/// one team's spot onto the other's even when the width is even.
fn kickoff_spot(config: &PitchConfig, team: TeamId) -> (i32, i32) {
    let cx = (config.width - 1) / 2;
    let x = match team {
        TeamId::A => cx,
        TeamId::B => config.width - 1 - cx,
    };
    (x, config.height / 2)
}

/// Rebuild the kickoff formation with `kicking` putting the ball in play.
fn apply_kickoff(config: &PitchConfig, state: &mut GameState, kicking: TeamId) {
    let count_a = state.team_a.len();
    let count_b = state.team_b.len();
    state.team_a.pos = formation(config, TeamId::A, count_a);
    state.team_b.pos = formation(config, TeamId::B, count_b);
    for team in [&mut state.team_a, &mut state.team_b] {
        for d in team.last_dir.iter_mut() {
            *d = (0, 0);
        }
        for s in team.sprint.iter_mut() {
            *s = false;
        }
    }
    let spot = kickoff_spot(config, kicking);
    if !state.team(kicking).is_empty() {
        state.team_mut(kicking).pos[0] = spot;
        state.possession = Possession::Held { team: kicking, player: 0 };
    } else {
        state.possession = Possession::Loose;
    }
    state.ball = spot;
    state.ball_dir = (0, 0);
    state.mode = GameMode::Kickoff;
}

pub fn reset(config: &PitchConfig) -> Result<GameState> {
    config.validate()?;
    let mut state = GameState {
        step: 0,
        team_a: TeamState::new(config.players_per_team),
        team_b: TeamState::new(config.opponents),
        ball: (0, 0),
        ball_dir: (0, 0),
        possession: Possession::Loose,
        score: (0, 0),
        mode: GameMode::OpenPlay,
        rng: ChaCha8Rng::seed_from_u64(config.seed),
    };
    match config.spawn {
        SpawnPlan::FullGame => {
            let kicking = if state.rng.gen_bool(0.5) { TeamId::A } else { TeamId::B };
            apply_kickoff(config, &mut state, kicking);
        }
        SpawnPlan::CounterAttack => {
            let (w, h) = (config.width, config.height);
            let mid = h / 2;
            state.team_a.pos = vec![(w * 5 / 8, mid), (w * 5 / 8, (mid + 2).min(h - 1))];
            state.team_b.pos = vec![(w * 13 / 16, mid)];
            state.ball = state.team_a.pos[0];
            state.possession = Possession::Held { team: TeamId::A, player: 0 };
        }
        SpawnPlan::ThreeVsOne => {
            let (w, h) = (config.width, config.height);
            let mid = h / 2;
            state.team_a.pos = vec![
                (w * 9 / 16, mid),
                (w * 9 / 16, (mid - 2).max(0)),
                (w * 9 / 16, (mid + 2).min(h - 1)),
            ];
            state.team_b.pos = vec![(w * 3 / 4, mid)];
            state.ball = state.team_a.pos[0];
            state.possession = Possession::Held { team: TeamId::A, player: 0 };
        }
    }
    Ok(state)
}

/// What a resolved ball flight ended as.
enum FlightEnd {
    Goal,
    Settled,
}

/// Keepers stop any ball passing within this Chebyshev distance of their
/// cell, so only the outer rows of the goal band are scorable.
pub const KEEPER_REACH: i32 = 1;

/// Effective keeper coverage for a pitch. On goal bands too narrow to leave
/// a scorable row outside the covered zone, the keeper only guards their own
/// cell, so every valid pitch keeps at least two scorable rows.
pub fn keeper_reach(config: &PitchConfig) -> i32 {
    let (lo, hi) = config.goal_band();
    if hi - lo >= 2 * (KEEPER_REACH + 1) {
        KEEPER_REACH
    } else {
        0
    }
}

/// Where a keeper clears a caught ball: several cells upfield on their row.
fn keeper_punt(config: &PitchConfig, kp: (i32, i32)) -> (i32, i32) {
    let x = if kp.0 == 0 { 5 } else { config.width - 6 };
    (x.clamp(0, config.width - 1), kp.1)
}

/// Walk an interceptable flight path. The ball ends with the first player or
/// keeper hit, at the goal if `scoring_cell` is reached, or loose at the end
/// of the path.
fn fly_ball(
    config: &PitchConfig,
    state: &mut GameState,
    team: TeamId,
    path: &[(i32, i32)],
    scoring_cell: Option<(i32, i32)>,
    events: &mut Vec<Event>,
) -> FlightEnd {
    let start = state.ball;
    let reach = keeper_reach(config);
    state.possession = Possession::Loose;
    for &c in path {
        for keeper_team in [TeamId::A, TeamId::B] {
            let kp = keeper_pos(config, keeper_team);
            if cheb(c, kp) <= reach {
                state.ball = keeper_punt(config, kp);
                set_ball_dir(state, start);
                events.push(Event::Save { shooter: team });
                return FlightEnd::Settled;
            }
        }
        match cell_occupancy(state, c) {
            Occupancy::Empty => {}
            Occupancy::Single(t, p) => {
                state.ball = c;
                set_ball_dir(state, start);
                state.possession = Possession::Held { team: t, player: p };
                if t != team {
                    events.push(Event::Intercept { team: t });
                }
                return FlightEnd::Settled;
            }
            Occupancy::Contested => {
                state.ball = c;
                set_ball_dir(state, start);
                return FlightEnd::Settled;
            }
        }
        if Some(c) == scoring_cell {
            state.ball = c;
            set_ball_dir(state, start);
            return FlightEnd::Goal;
        }
    }
    if let Some(&last) = path.last() {
        state.ball = last;
        set_ball_dir(state, start);
    }
    FlightEnd::Settled
}

fn set_ball_dir(state: &mut GameState, start: (i32, i32)) {
    state.ball_dir = ((state.ball.0 - start.0).signum(), (state.ball.1 - start.1).signum());
}

enum Occupancy {
    Empty,
    Single(TeamId, usize),
    Contested,
}

/// Who stands on a cell. A cell shared by both teams is contested: a ball
/// arriving there stays loose rather than favoring either side.
fn cell_occupancy(state: &GameState, cell: (i32, i32)) -> Occupancy {
    let mut found: Option<(TeamId, usize)> = None;
    for (tid, team) in [(TeamId::A, &state.team_a), (TeamId::B, &state.team_b)] {
        for (i, &p) in team.pos.iter().enumerate() {
            if p == cell {
                match found {
                    None => {
                        found = Some((tid, i));
                        break;
                    }
                    Some((t0, _)) if t0 != tid => return Occupancy::Contested,
                    Some(_) => {}
                }
            }
        }
    }
    match found {
        None => Occupancy::Empty,
        Some((t, p)) => Occupancy::Single(t, p),
    }
}

fn resolve_shot(
    config: &PitchConfig,
    state: &mut GameState,
    team: TeamId,
    shooter: (i32, i32),
    events: &mut Vec<Event>,
) -> FlightEnd {
    let gx = goal_x(config, team);
    let (lo, hi) = config.goal_band();
    let target = (gx, shooter.1.clamp(lo, hi));
    let range = config.shot_range();
    let mut path = line_cells(shooter, target);
    let in_range = euclid(shooter, target) <= range;
    if !in_range {
        path.retain(|&c| euclid(shooter, c) <= range);
    }
    if path.is_empty() && shooter == target {
        return FlightEnd::Goal;
    }
    let scoring = if in_range { Some(target) } else { None };
    fly_ball(config, state, team, &path, scoring, events)
}

fn resolve_pass(
    config: &PitchConfig,
    state: &mut GameState,
    team: TeamId,
    passer_idx: usize,
    kind: Action,
    events: &mut Vec<Event>,
) {
    let ts = state.team(team);
    let from = ts.pos[passer_idx];
    let receiver = match kind {
        Action::ShortPass => nearest_teammate(ts, passer_idx, from),
        _ => most_advanced_teammate(ts, passer_idx, team),
    };
    let Some(r) = receiver else { return };
    let r_pos = ts.pos[r];
    match kind {
        Action::ShortPass => {
            let path = line_cells(from, r_pos);
            fly_ball(config, state, team, &path, None, events);
        }
        Action::LongPass => {
            let landing = clamp_pos(config, (r_pos.0 + team.attack_dir(), r_pos.1));
            let path = line_cells(from, landing);
            fly_ball(config, state, team, &path, None, events);
        }
        Action::HighPass => {
            let landing = clamp_pos(config, (r_pos.0 + team.attack_dir(), r_pos.1));
            state.possession = Possession::Loose;
            let start = state.ball;
            for keeper_team in [TeamId::A, TeamId::B] {
                let kp = keeper_pos(config, keeper_team);
                if cheb(landing, kp) <= keeper_reach(config) {
                    state.ball = keeper_punt(config, kp);
                    set_ball_dir(state, start);
                    return;
                }
            }
            state.ball = landing;
            set_ball_dir(state, start);
        }
        _ => {}
    }
}

fn nearest_teammate(ts: &TeamState, me: usize, from: (i32, i32)) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for i in 0..ts.len() {
        if i == me {
            continue;
        }
        let d = euclid(from, ts.pos[i]);
        if best.map_or(true, |(bd, _)| d < bd) {
            best = Some((d, i));
        }
    }
    best.map(|(_, i)| i)
}

fn most_advanced_teammate(ts: &TeamState, me: usize, team: TeamId) -> Option<usize> {
    let mut best: Option<(i32, usize)> = None;
    for i in 0..ts.len() {
        if i == me {
            continue;
        }
        let adv = ts.pos[i].0 * team.attack_dir();
        if best.map_or(true, |(ba, _)| adv > ba) {
            best = Some((adv, i));
        }
    }
    best.map(|(_, i)| i)
}

/// Loose-ball pickup: nearest player within one cell takes possession; an
/// exact cross-team distance tie leaves the ball contested (loose).
fn resolve_pickup(state: &mut GameState) {
    let ball = state.ball;
    let mut best_d = f64::INFINITY;
    let mut best: Vec<(TeamId, usize)> = Vec::new();
    for (tid, team) in [(TeamId::A, &state.team_a), (TeamId::B, &state.team_b)] {
        for (i, &p) in team.pos.iter().enumerate() {
            if cheb(p, ball) > 1 {
                continue;
            }
            let d = euclid(p, ball);
            if d < best_d {
                best_d = d;
                best.clear();
                best.push((tid, i));
            } else if d == best_d {
                best.push((tid, i));
            }
        }
    }
    if best.is_empty() {
        return;
    }
    let team = best[0].0;
    if best.iter().any(|&(t, _)| t != team) {
        return;
    }
    let player = best.iter().map(|&(_, i)| i).min().unwrap();
    let start = state.ball;
    state.ball = state.team(team).pos[player];
    set_ball_dir(state, start);
    state.possession = Possession::Held { team, player };
}

fn substitute_build_in(
    config: &PitchConfig,
    state: &GameState,
    team: TeamId,
    actions: &[Action],
) -> Result<Vec<Action>> {
    let expected = state.team(team).len();
    if actions.len() != expected {
        return Err(Error::invalid(format!(
            "expected {expected} actions for team {team:?}, got {}",
            actions.len()
        )));
    }
    let mut out = Vec::with_capacity(actions.len());
    for (i, &a) in actions.iter().enumerate() {
        if a == Action::BuildIn {
            if !config.buildin_allowed {
                return Err(Error::invalid(
                    "BUILD_IN is not legal in this scenario".to_string(),
                ));
            }
            out.push(scripted_controller(config, state, team, i));
        } else {
            out.push(a);
        }
    }
    Ok(out)
}

fn apply_movement(
    config: &PitchConfig,
    state: &mut GameState,
    team: TeamId,
    actions: &[Action],
) {
    for i in 0..actions.len() {
        let mut delta = match actions[i].move_delta() {
            Some(d) => d,
            None => {
                state.team_mut(team).last_dir[i] = (0, 0);
                continue;
            }
        };
        if config.action_noise > 0.0 {
            let u: f64 = state.rng.gen();
            if u < config.action_noise {
                let k = state.rng.gen_range(0..8u8);
                let dirs = [(-1, 0), (-1, -1), (0, -1), (1, -1), (1, 0), (1, 1), (0, 1), (-1, 1)];
                delta = dirs[k as usize];
            }
        }
        let steps = if state.team(team).sprint[i] { 2 } else { 1 };
        let carrier = state.possession == Possession::Held { team, player: i };
        for _ in 0..steps {
            let p = state.team(team).pos[i];
            let np = clamp_pos(config, (p.0 + delta.0, p.1 + delta.1));
            state.team_mut(team).pos[i] = np;
            if carrier {
                state.ball = np;
                state.ball_dir = delta;
            }
        }
        state.team_mut(team).last_dir[i] = delta;
    }
}

/// Advance one step with both teams' actions supplied explicitly.
///
/// Reward and outcome are from team A's perspective; team B's reward is the
/// negation. BUILD_IN entries are replaced by the scripted controller before
/// any physics runs.
pub fn step_joint(
    config: &PitchConfig,
    state: &mut GameState,
    actions_a: &[Action],
    actions_b: &[Action],
) -> Result<StepOutcome> {
    let acts_a = substitute_build_in(config, state, TeamId::A, actions_a)?;
    let acts_b = substitute_build_in(config, state, TeamId::B, actions_b)?;
    let mut events = Vec::new();

    for (team, acts) in [(TeamId::A, &acts_a), (TeamId::B, &acts_b)] {
        for (i, &a) in acts.iter().enumerate() {
            match a {
                Action::Sprint => state.team_mut(team).sprint[i] = true,
                Action::ReleaseSprint => state.team_mut(team).sprint[i] = false,
                _ => {}
            }
        }
    }

    apply_movement(config, state, TeamId::A, &acts_a);
    apply_movement(config, state, TeamId::B, &acts_b);

    let mut goal_for: Option<TeamId> = None;
    if let Possession::Held { team, player } = state.possession {
        let act = match team {
            TeamId::A => acts_a[player],
            TeamId::B => acts_b[player],
        };
        match act {
            Action::Shot => {
                let shooter = state.team(team).pos[player];
                if let FlightEnd::Goal = resolve_shot(config, state, team, shooter, &mut events) {
                    goal_for = Some(team);
                }
            }
            Action::ShortPass | Action::LongPass | Action::HighPass => {
                resolve_pass(config, state, team, player, act, &mut events);
            }
            _ => {}
        }
    }

    if let Some(scorer) = goal_for {
        events.push(Event::Goal { team: scorer });
        match scorer {
            TeamId::A => state.score.0 += 1,
            TeamId::B => state.score.1 += 1,
        }
        apply_kickoff(config, state, scorer.other());
    } else {
        if let Possession::Held { team, player } = state.possession {
            let carrier = state.team(team).pos[player];
            let opp = team.other();
            let opp_acts = match opp {
                TeamId::A => &acts_a,
                TeamId::B => &acts_b,
            };
            let stolen = state
                .team(opp)
                .pos
                .iter()
                .enumerate()
                .any(|(i, &p)| opp_acts[i] == Action::Slide && cheb(p, carrier) <= 1);
            if stolen {
                state.possession = Possession::Loose;
                state.ball = carrier;
                events.push(Event::Steal { team: opp });
            }
        }
        if state.possession == Possession::Loose {
            resolve_pickup(state);
        }
        if state.mode == GameMode::Kickoff {
            state.mode = GameMode::OpenPlay;
        }
    }

    state.step += 1;
    let reward = match goal_for {
        Some(TeamId::A) => 1.0,
        Some(TeamId::B) => -1.0,
        None => 0.0,
    };
    let done = state.step >= config.episode_len
        || (config.terminate_on_goal && goal_for.is_some());
    Ok(StepOutcome { reward, events, done })
}

/// Advance one step controlling team A; team B plays fully scripted.
pub fn step(
    config: &PitchConfig,
    state: &mut GameState,
    actions: &[Action],
) -> Result<StepOutcome> {
    let opp: Vec<Action> = (0..state.team_b.len())
        .map(|i| scripted_controller(config, state, TeamId::B, i))
        .collect();
    step_joint(config, state, actions, &opp)
}
