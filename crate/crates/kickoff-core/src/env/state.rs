//! Game state for the grid pitch.

use rand_chacha::ChaCha8Rng;

use crate::env::config::PitchConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum TeamId {
    A,
    B,
}

impl TeamId {
    pub fn other(self) -> TeamId {
        match self {
            TeamId::A => TeamId::B,
            TeamId::B => TeamId::A,
        }
    }

    /// +1 if the team attacks toward increasing x, -1 otherwise.
    pub fn attack_dir(self) -> i32 {
        match self {
            TeamId::A => 1,
            TeamId::B => -1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Possession {
    Loose,
    Held { team: TeamId, player: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GameMode {
    Kickoff,
    OpenPlay,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Event {
    Goal { team: TeamId },
    Save { shooter: TeamId },
    Intercept { team: TeamId },
    Steal { team: TeamId },
}

/// Per-team dynamic player data. Goalkeepers are static and live in
/// [`PitchConfig`]-derived helpers, not here.
#[derive(Debug, Clone, PartialEq)]
pub struct TeamState {
    pub pos: Vec<(i32, i32)>,
    /// Unit components of each player's last movement, (0, 0) if standing.
    pub last_dir: Vec<(i32, i32)>,
    pub sprint: Vec<bool>,
}

impl TeamState {
    pub fn new(count: usize) -> TeamState {
        TeamState {
            pos: vec![(0, 0); count],
            last_dir: vec![(0, 0); count],
            sprint: vec![false; count],
        }
    }

    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameState {
    pub step: u32,
    pub team_a: TeamState,
    pub team_b: TeamState,
    pub ball: (i32, i32),
    /// Unit components of the ball's last displacement.
    pub ball_dir: (i32, i32),
    pub possession: Possession,
    pub score: (u32, u32),
    pub mode: GameMode,
    pub rng: ChaCha8Rng,
}

impl GameState {
    pub fn team(&self, id: TeamId) -> &TeamState {
        match id {
            TeamId::A => &self.team_a,
            TeamId::B => &self.team_b,
        }
    }

    pub fn team_mut(&mut self, id: TeamId) -> &mut TeamState {
        match id {
            TeamId::A => &mut self.team_a,
            TeamId::B => &mut self.team_b,
        }
    }

    pub fn score_for(&self, id: TeamId) -> (u32, u32) {
        match id {
            TeamId::A => (self.score.0, self.score.1),
            TeamId::B => (self.score.1, self.score.0),
        }
    }

    pub fn possessing_team(&self) -> Option<TeamId> {
        match self.possession {
            Possession::Loose => None,
            Possession::Held { team, .. } => Some(team),
        }
    }
}

/// Static goalkeeper cell for a team's own goal.
pub fn keeper_pos(config: &PitchConfig, team: TeamId) -> (i32, i32) {
    let x = match team {
        TeamId::A => 0,
        TeamId::B => config.width - 1,
    };
    (x, config.keeper_row())
}

/// Goal line x coordinate that `team` attacks toward.
pub fn goal_x(config: &PitchConfig, team: TeamId) -> i32 {
    match team {
        TeamId::A => config.width - 1,
        TeamId::B => 0,
    }
}

pub fn euclid(a: (i32, i32), b: (i32, i32)) -> f64 {
    let dx = (a.0 - b.0) as f64;
    let dy = (a.1 - b.1) as f64;
    (dx * dx + dy * dy).sqrt()
}

pub fn cheb(a: (i32, i32), b: (i32, i32)) -> i32 {
    (a.0 - b.0).abs().max((a.1 - b.1).abs())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn goal_and_keeper_geometry() {
        let c = PitchConfig::full_game(4, 0);
        assert_eq!(goal_x(&c, TeamId::A), c.width - 1);
        assert_eq!(goal_x(&c, TeamId::B), 0);
        assert_eq!(keeper_pos(&c, TeamId::A).0, 0);
        assert_eq!(keeper_pos(&c, TeamId::B).0, c.width - 1);
    }

    #[test]
    fn distance_helpers() {
        assert_eq!(euclid((0, 0), (3, 4)), 5.0);
        assert_eq!(cheb((0, 0), (3, 4)), 4);
        assert_eq!(cheb((2, 2), (2, 2)), 0);
    }
}
