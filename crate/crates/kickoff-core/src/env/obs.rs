//! Per-player observation vectors.
//!
//! Flat f64 vectors laid out as named contiguous groups. The layout is a
//! pure function of the config, sized by `layout_players` slots per team so
//! that scenarios with fewer players stay dimension-compatible with full
//! games. Teammate slots are observer-relative: slot 0 is always the
//! observing player, then remaining teammates in index order, then the
//! goalkeeper; absent slots are zero.

use crate::env::config::PitchConfig;
use crate::env::controller::designated_player;
use crate::env::state::{euclid, keeper_pos, GameMode, GameState, Possession, TeamId};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ObservationLayout {
    pub groups: Vec<(&'static str, usize)>,
}

impl ObservationLayout {
    pub fn dim(&self) -> usize {
        self.groups.iter().map(|(_, n)| n).sum()
    }

    pub fn offset_of(&self, name: &str) -> Option<(usize, usize)> {
        let mut off = 0;
        for &(g, n) in &self.groups {
            if g == name {
                return Some((off, n));
            }
            off += n;
        }
        None
    }
}

pub fn layout(config: &PitchConfig) -> ObservationLayout {
    let slots = config.layout_players + 1;
    ObservationLayout {
        groups: vec![
            ("teammate_coords", 2 * slots),
            ("teammate_dirs", 2 * slots),
            ("enemy_coords", 2 * slots),
            ("enemy_dirs", 2 * slots),
            ("self_coord", 2),
            ("ball_coord", 2),
            ("ball_dir", 2),
            ("ball_owned", 3),
            ("designated", config.layout_players),
            ("game_mode", 2),
            ("ball_self_dist", 1),
            ("teammate_rel", 2 * slots),
            ("enemy_rel", 2 * slots),
            ("enemy_dists", slots),
            ("offside", 2),
            ("steps_left", 1),
            ("goal_diff", 1),
            ("padding", 8),
        ],
    }
}

pub fn obs_dim(config: &PitchConfig) -> usize {
    layout(config).dim()
}

fn norm_x(config: &PitchConfig, x: i32) -> f64 {
    2.0 * x as f64 / (config.width - 1) as f64 - 1.0
}

fn norm_y(config: &PitchConfig, y: i32) -> f64 {
    2.0 * y as f64 / (config.height - 1) as f64 - 1.0
}

fn diag(config: &PitchConfig) -> f64 {
    (((config.width - 1).pow(2) + (config.height - 1).pow(2)) as f64).sqrt()
}

/// Teammate slot order seen by `player`: self, then others ascending, then
/// the keeper as the final slot. Returns player indices; None marks the
/// keeper slot.
fn observer_order(count: usize, player: usize) -> Vec<usize> {
    let mut order = vec![player];
    order.extend((0..count).filter(|&i| i != player));
    order
}

/// True when `team` has an outfield player past midfield and beyond every
/// opposing outfield player, in its attacking direction.
fn offside_flag(config: &PitchConfig, state: &GameState, team: TeamId) -> f64 {
    let dir = team.attack_dir();
    let own = state.team(team);
    let opp = state.team(team.other());
    let last_def = opp
        .pos
        .iter()
        .map(|&p| p.0 * dir)
        .fold(i32::MIN, i32::max);
    let mid = (config.width - 1) as f64 / 2.0;
    own.pos.iter().any(|&p| {
        let adv = p.0 * dir;
        let past_mid = if dir > 0 {
            (p.0 as f64) > mid
        } else {
            (p.0 as f64) < mid
        };
        past_mid && (opp.pos.is_empty() || adv > last_def)
    }) as u8 as f64
}

pub fn build_observation(
    config: &PitchConfig,
    state: &GameState,
    team: TeamId,
    player: usize,
) -> Vec<f64> {
    let lay = layout(config);
    let mut obs = vec![0.0; lay.dim()];
    let slots = config.layout_players + 1;
    let own = state.team(team);
    let opp_team = team.other();
    let opp = state.team(opp_team);
    let me = own.pos[player];

    let mut off = 0;
    let order = observer_order(own.len(), player);

    // teammate_coords + teammate_dirs
    for (slot, &idx) in order.iter().enumerate() {
        obs[off + 2 * slot] = norm_x(config, own.pos[idx].0);
        obs[off + 2 * slot + 1] = norm_y(config, own.pos[idx].1);
        let d = own.last_dir[idx];
        obs[off + 2 * slots + 2 * slot] = d.0 as f64;
        obs[off + 2 * slots + 2 * slot + 1] = d.1 as f64;
    }
    let own_kp = keeper_pos(config, team);
    obs[off + 2 * (slots - 1)] = norm_x(config, own_kp.0);
    obs[off + 2 * (slots - 1) + 1] = norm_y(config, own_kp.1);
    off += 4 * slots;

    // enemy_coords + enemy_dirs
    for i in 0..opp.len() {
        obs[off + 2 * i] = norm_x(config, opp.pos[i].0);
        obs[off + 2 * i + 1] = norm_y(config, opp.pos[i].1);
        obs[off + 2 * slots + 2 * i] = opp.last_dir[i].0 as f64;
        obs[off + 2 * slots + 2 * i + 1] = opp.last_dir[i].1 as f64;
    }
    let opp_kp = keeper_pos(config, opp_team);
    obs[off + 2 * (slots - 1)] = norm_x(config, opp_kp.0);
    obs[off + 2 * (slots - 1) + 1] = norm_y(config, opp_kp.1);
    off += 4 * slots;

    // self_coord
    obs[off] = norm_x(config, me.0);
    obs[off + 1] = norm_y(config, me.1);
    off += 2;

    // ball_coord, ball_dir
    obs[off] = norm_x(config, state.ball.0);
    obs[off + 1] = norm_y(config, state.ball.1);
    obs[off + 2] = state.ball_dir.0 as f64;
    obs[off + 3] = state.ball_dir.1 as f64;
    off += 4;

    // ball_owned one-hot: none / ours / theirs
    let owned = match state.possession {
        Possession::Loose => 0,
        Possession::Held { team: t, .. } if t == team => 1,
        _ => 2,
    };
    obs[off + owned] = 1.0;
    off += 3;

    // designated one-hot in observer-relative slots
    let designated = designated_player(state, team);
    let slot = order.iter().position(|&i| i == designated).unwrap();
    obs[off + slot] = 1.0;
    off += config.layout_players;

    // game mode one-hot
    match state.mode {
        GameMode::Kickoff => obs[off] = 1.0,
        GameMode::OpenPlay => obs[off + 1] = 1.0,
    }
    off += 2;

    obs[off] = euclid(me, state.ball) / diag(config);
    off += 1;

    // teammate_rel
    for (slot, &idx) in order.iter().enumerate() {
        obs[off + 2 * slot] = norm_x(config, own.pos[idx].0) - norm_x(config, me.0);
        obs[off + 2 * slot + 1] = norm_y(config, own.pos[idx].1) - norm_y(config, me.1);
    }
    obs[off + 2 * (slots - 1)] = norm_x(config, own_kp.0) - norm_x(config, me.0);
    obs[off + 2 * (slots - 1) + 1] = norm_y(config, own_kp.1) - norm_y(config, me.1);
    off += 2 * slots;

    // enemy_rel + enemy_dists
    for i in 0..opp.len() {
        obs[off + 2 * i] = norm_x(config, opp.pos[i].0) - norm_x(config, me.0);
        obs[off + 2 * i + 1] = norm_y(config, opp.pos[i].1) - norm_y(config, me.1);
        obs[off + 2 * slots + i] = euclid(me, opp.pos[i]) / diag(config);
    }
    obs[off + 2 * (slots - 1)] = norm_x(config, opp_kp.0) - norm_x(config, me.0);
    obs[off + 2 * (slots - 1) + 1] = norm_y(config, opp_kp.1) - norm_y(config, me.1);
    obs[off + 2 * slots + slots - 1] = euclid(me, opp_kp) / diag(config);
    off += 3 * slots;

    // offside flags: own team's attacking flag, then the opponent's
    obs[off] = offside_flag(config, state, team);
    obs[off + 1] = offside_flag(config, state, opp_team);
    off += 2;

    let remaining = config.episode_len.saturating_sub(state.step);
    obs[off] = remaining as f64 / config.episode_len as f64;
    off += 1;

    let (own_score, their_score) = state.score_for(team);
    obs[off] = (own_score as f64 - their_score as f64) / 5.0;
    off += 1;

    debug_assert_eq!(off + 8, lay.dim());
    obs
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::env::physics::reset;
    use proptest::prelude::*;
    use rand::Rng;
    use rand_chacha::ChaCha8Rng;
    use rand::SeedableRng;

    #[test]
    fn dimension_follows_layout_players() {
        for n in 1..=6 {
            let mut c = PitchConfig::full_game(n, 0);
            c.layout_players = n;
            assert_eq!(obs_dim(&c), 14 * n + 37);
        }
        let academy = PitchConfig::academy("three_vs_one", 0).unwrap();
        let full = PitchConfig::full_game(4, 0);
        assert_eq!(obs_dim(&academy), obs_dim(&full));
    }

    #[test]
    fn self_coord_group_matches_position() {
        let c = PitchConfig::full_game(4, 1);
        let s = reset(&c).unwrap();
        let lay = layout(&c);
        for p in 0..4 {
            let obs = build_observation(&c, &s, TeamId::A, p);
            let (off, _) = lay.offset_of("self_coord").unwrap();
            assert_eq!(obs[off], norm_x(&c, s.team_a.pos[p].0));
            assert_eq!(obs[off + 1], norm_y(&c, s.team_a.pos[p].1));
            let (toff, _) = lay.offset_of("teammate_coords").unwrap();
            assert_eq!(obs[toff], obs[off]);
            assert_eq!(obs[toff + 1], obs[off + 1]);
        }
    }

    #[test]
    fn padding_group_is_zero() {
        let c = PitchConfig::full_game(4, 1);
        let s = reset(&c).unwrap();
        let lay = layout(&c);
        let (off, n) = lay.offset_of("padding").unwrap();
        let obs = build_observation(&c, &s, TeamId::B, 2);
        assert!(obs[off..off + n].iter().all(|&v| v == 0.0));
        assert_eq!(off + n, lay.dim());
    }

    #[test]
    fn designated_slot_zero_means_me() {
        let c = PitchConfig::full_game(4, 1);
        let s = reset(&c).unwrap();
        let lay = layout(&c);
        let (off, _) = lay.offset_of("designated").unwrap();
        let d = designated_player(&s, TeamId::A);
        let obs = build_observation(&c, &s, TeamId::A, d);
        assert_eq!(obs[off], 1.0);
        let other = (d + 1) % 4;
        let obs = build_observation(&c, &s, TeamId::A, other);
        assert_eq!(obs[off], 0.0);
        assert_eq!(obs.iter().filter(|&&v| v == 1.0).count() >= 1, true);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn relative_groups_match_recomputation(seed in 0u64..500) {
            let c = PitchConfig::full_game(4, seed);
            let mut s = reset(&c).unwrap();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            for p in s.team_a.pos.iter_mut() {
                *p = (rng.gen_range(0..c.width), rng.gen_range(0..c.height));
            }
            for p in s.team_b.pos.iter_mut() {
                *p = (rng.gen_range(0..c.width), rng.gen_range(0..c.height));
            }
            s.possession = Possession::Loose;
            s.ball = (rng.gen_range(0..c.width), rng.gen_range(0..c.height));
            let lay = layout(&c);
            let me = 1usize;
            let obs = build_observation(&c, &s, TeamId::A, me);
            let (abs_t, n) = lay.offset_of("teammate_coords").unwrap();
            let (rel_t, _) = lay.offset_of("teammate_rel").unwrap();
            let (self_off, _) = lay.offset_of("self_coord").unwrap();
            for k in 0..n {
                let want = obs[abs_t + k] - obs[self_off + (k % 2)];
                prop_assert!((obs[rel_t + k] - want).abs() < 1e-12);
            }
            let (abs_e, ne) = lay.offset_of("enemy_coords").unwrap();
            let (rel_e, _) = lay.offset_of("enemy_rel").unwrap();
            for k in 0..ne {
                let want = obs[abs_e + k] - obs[self_off + (k % 2)];
                prop_assert!((obs[rel_e + k] - want).abs() < 1e-12);
            }
        }

        #[test]
        fn coords_are_normalized_and_finite(seed in 0u64..200) {
            let c = PitchConfig::full_game(3, seed);
            let s = reset(&c).unwrap();
            for p in 0..3 {
                let obs = build_observation(&c, &s, TeamId::B, p);
                prop_assert!(obs.iter().all(|v| v.is_finite()));
                let lay = layout(&c);
                for g in ["teammate_coords", "enemy_coords", "self_coord", "ball_coord"] {
                    let (off, n) = lay.offset_of(g).unwrap();
                    for k in 0..n {
                        prop_assert!((-1.0..=1.0).contains(&obs[off + k]));
                    }
                }
            }
        }
    }
}
