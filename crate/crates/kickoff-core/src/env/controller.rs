//! Rule-based controllers: the build-in player logic and the stronger
//! expert used to generate demonstrations.
//!
//! Both controllers reason in a canonical frame where their own team attacks
//! toward increasing x; team B's state is mirrored in and its action
//! mirrored back out. This makes the two teams exactly symmetric, so
//! scripted self-play has zero systematic side bias.

use crate::env::action::Action;
use crate::env::config::PitchConfig;
use crate::env::physics::{keeper_reach, line_cells};
use crate::env::state::{cheb, euclid, keeper_pos, GameState, Possession, TeamId};

/// Canonical attack-right frame for one team.
#[derive(Clone, Copy)]
struct Frame {
    mirrored: bool,
    width: i32,
}

impl Frame {
    fn new(config: &PitchConfig, team: TeamId) -> Frame {
        Frame { mirrored: team == TeamId::B, width: config.width }
    }

    fn pos(&self, p: (i32, i32)) -> (i32, i32) {
        if self.mirrored {
            (self.width - 1 - p.0, p.1)
        } else {
            p
        }
    }

    fn action_out(&self, a: Action) -> Action {
        if self.mirrored {
            a.mirror_x()
        } else {
            a
        }
    }
}

/// Everything a controller looks at, already in the canonical frame.
struct View {
    me: (i32, i32),
    ball: (i32, i32),
    mates: Vec<(i32, i32)>,
    opponents: Vec<(i32, i32)>,
    opp_keeper: (i32, i32),
    own_possession: Option<usize>,
    opp_possesses: bool,
    sprinting: bool,
    goal_x: i32,
    band: (i32, i32),
    keeper_row: i32,
    keeper_reach: i32,
    shot_range: f64,
    width: i32,
    height: i32,
}

fn view(config: &PitchConfig, state: &GameState, team: TeamId, player: usize) -> (View, Frame) {
    let frame = Frame::new(config, team);
    let ts = state.team(team);
    let os = state.team(team.other());
    let own_possession = match state.possession {
        Possession::Held { team: t, player: p } if t == team => Some(p),
        _ => None,
    };
    let v = View {
        me: frame.pos(ts.pos[player]),
        ball: frame.pos(state.ball),
        mates: ts.pos.iter().map(|&p| frame.pos(p)).collect(),
        opponents: os.pos.iter().map(|&p| frame.pos(p)).collect(),
        opp_keeper: frame.pos(keeper_pos(config, team.other())),
        own_possession,
        opp_possesses: matches!(state.possession, Possession::Held { team: t, .. } if t != team),
        sprinting: ts.sprint[player],
        goal_x: config.width - 1,
        band: config.goal_band(),
        keeper_row: config.keeper_row(),
        keeper_reach: keeper_reach(config),
        shot_range: config.shot_range(),
        width: config.width,
        height: config.height,
    };
    (v, frame)
}

/// One move along an 8-connected shortest path toward `target`. Ties between
/// equally short successor cells break toward smaller x, then smaller y.
fn move_toward(v: &View, from: (i32, i32), target: (i32, i32)) -> Action {
    let mut best: Option<((i32, i32, i32), Action)> = None;
    for (dx, dy) in [
        (0, 0),
        (-1, 0),
        (-1, -1),
        (0, -1),
        (1, -1),
        (1, 0),
        (1, 1),
        (0, 1),
        (-1, 1),
    ] {
        let sx = (from.0 + dx).clamp(0, v.width - 1);
        let sy = (from.1 + dy).clamp(0, v.height - 1);
        let key = (cheb((sx, sy), target), sx, sy);
        if best.map_or(true, |(bk, _)| key < bk) {
            best = Some((key, Action::from_move_delta(dx, dy)));
        }
    }
    best.unwrap().1
}

fn shot_target(v: &View, from: (i32, i32)) -> (i32, i32) {
    (v.goal_x, from.1.clamp(v.band.0, v.band.1))
}

fn in_shot_range(v: &View, from: (i32, i32)) -> bool {
    euclid(from, shot_target(v, from)) <= v.shot_range
}

/// Index of the team player who should chase the ball: nearest by Euclidean
/// distance, possessor excluded, ties to the lowest index.
fn chaser(v: &View) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (i, &p) in v.mates.iter().enumerate() {
        if v.own_possession == Some(i) {
            continue;
        }
        let d = euclid(p, v.ball);
        if best.map_or(true, |(bd, _)| d < bd) {
            best = Some((d, i));
        }
    }
    best.map(|(_, i)| i)
}

/// Off-ball positioning. Player 0 is a defensive anchor covering the
/// scorable row nearest the ball, goal-side of it; the rest spread from
/// deep to advanced support, holding fixed lanes.
fn formation_lane(v: &View, player: usize) -> (i32, i32) {
    let count = v.mates.len() as i32;
    if player == 0 && count > 1 {
        let x = (v.ball.0 - 3).clamp(1, v.width - 2);
        let y = scoring_row(v, v.ball);
        return (x, y);
    }
    let off = if count == 1 {
        2
    } else {
        -5 + 9 * player as i32 / (count - 1)
    };
    let y = v.height * (player as i32 + 1) / (count + 1);
    let x = (v.ball.0 + off).clamp(1, v.width - 2);
    (x, y)
}

/// The build-in rule policy that BUILD_IN actions delegate to.
pub fn scripted_controller(
    config: &PitchConfig,
    state: &GameState,
    team: TeamId,
    player: usize,
) -> Action {
    let (v, frame) = view(config, state, team, player);
    let act = if v.own_possession == Some(player) {
        if in_shot_range(&v, v.me) {
            Action::Shot
        } else {
            move_toward(&v, v.me, shot_target(&v, v.me))
        }
    } else if chaser(&v) == Some(player) {
        if v.opp_possesses && cheb(v.me, v.ball) <= 1 {
            Action::Slide
        } else {
            move_toward(&v, v.me, v.ball)
        }
    } else {
        let home = formation_lane(&v, player);
        if v.me == home {
            Action::Idle
        } else {
            move_toward(&v, v.me, home)
        }
    };
    frame.action_out(act)
}

/// The team player the single-agent expert controls right now: the
/// possessor when the team has the ball, otherwise the player closest to it
/// (Euclidean), ties to the lowest index.
pub fn designated_player(state: &GameState, team: TeamId) -> usize {
    if let Possession::Held { team: t, player } = state.possession {
        if t == team {
            return player;
        }
    }
    let ts = state.team(team);
    let mut best = (f64::INFINITY, 0);
    for (i, &p) in ts.pos.iter().enumerate() {
        let d = euclid(p, state.ball);
        if d < best.0 {
            best = (d, i);
        }
    }
    best.1
}

/// Whether a shot taken from `from` would reach the goal. Shots fly toward
/// the shooter's own row clamped into the goal band, so this is true only
/// when the shooter stands on a row the keeper cannot cover, is within
/// range, and no player or keeper-covered cell sits on the flight path.
fn shot_scores(v: &View, from: (i32, i32)) -> bool {
    let target = shot_target(v, from);
    if euclid(from, target) > v.shot_range {
        return false;
    }
    line_cells(from, target).iter().all(|&c| {
        cheb(c, v.opp_keeper) > v.keeper_reach
            && !v.mates.contains(&c)
            && !v.opponents.contains(&c)
    })
}

fn path_free_of_opponents(v: &View, from: (i32, i32), to: (i32, i32)) -> bool {
    line_cells(from, to)
        .iter()
        .all(|&c| cheb(c, v.opp_keeper) > v.keeper_reach && !v.opponents.contains(&c))
}

fn open(v: &View, cell: (i32, i32)) -> bool {
    v.opponents.iter().all(|&o| cheb(o, cell) > 1)
}

fn most_advanced_mate(v: &View, me_idx: usize) -> Option<usize> {
    let mut best: Option<(i32, usize)> = None;
    for (i, &p) in v.mates.iter().enumerate() {
        if i == me_idx {
            continue;
        }
        if best.map_or(true, |(bx, _)| p.0 > bx) {
            best = Some((p.0, i));
        }
    }
    best.map(|(_, i)| i)
}

fn nearest_mate(v: &View, me_idx: usize) -> Option<usize> {
    let mut best: Option<(f64, usize)> = None;
    for (i, &p) in v.mates.iter().enumerate() {
        if i == me_idx {
            continue;
        }
        let d = euclid(v.me, p);
        if best.map_or(true, |(bd, _)| d < bd) {
            best = Some((d, i));
        }
    }
    best.map(|(_, i)| i)
}

/// The demonstration policy for the designated player. Stronger than the
/// build-in rules: it refuses blocked shots, plays lead passes to open
/// teammates nearer the goal, and sidesteps the keeper's row instead of
/// shooting into it.
pub fn expert_policy(config: &PitchConfig, state: &GameState, team: TeamId) -> Action {
    let player = designated_player(state, team);
    let (v, frame) = view(config, state, team, player);
    let act = expert_decision(&v, player);
    frame.action_out(act)
}

/// Row the expert dribbles toward: the closest band row outside the
/// keeper's reach, ties to the smaller row.
fn scoring_row(v: &View, from: (i32, i32)) -> i32 {
    let mut best = v.band.0;
    let mut best_d = i32::MAX;
    for r in v.band.0..=v.band.1 {
        if (r - v.keeper_row).abs() <= v.keeper_reach {
            continue;
        }
        let d = (from.1 - r).abs();
        if d < best_d {
            best_d = d;
            best = r;
        }
    }
    best
}

fn expert_decision(v: &View, player: usize) -> Action {
    if v.own_possession != Some(player) {
        if v.opp_possesses && cheb(v.me, v.ball) <= 1 {
            return Action::Slide;
        }
        if !v.sprinting && cheb(v.me, v.ball) > 2 {
            return Action::Sprint;
        }
        return move_toward(v, v.me, v.ball);
    }

    if shot_scores(v, v.me) {
        return Action::Shot;
    }

    let pressured = v.opponents.iter().any(|&o| cheb(o, v.me) <= 2);
    if let Some(r) = most_advanced_mate(v, player) {
        let rp = v.mates[r];
        if rp.0 > v.me.0 {
            let landing = ((rp.0 + 1).clamp(0, v.width - 1), rp.1);
            if open(v, rp) && path_free_of_opponents(v, v.me, landing) {
                return Action::LongPass;
            }
            if open(v, landing) && cheb(landing, v.opp_keeper) > v.keeper_reach {
                return Action::HighPass;
            }
        }
    }
    if let Some(q) = nearest_mate(v, player) {
        let qp = v.mates[q];
        if (qp.0 > v.me.0 || pressured) && open(v, qp) && path_free_of_opponents(v, v.me, qp) {
            return Action::ShortPass;
        }
    }
    let adjacent_pressure = v.opponents.iter().any(|&o| cheb(o, v.me) <= 1);
    if !v.sprinting && !adjacent_pressure {
        return Action::Sprint;
    }
    move_toward(v, v.me, (v.goal_x, scoring_row(v, v.me)))
}
