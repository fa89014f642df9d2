//! Discrete action space for the grid pitch.
//!
//! The full game exposes 20 actions with BUILD_IN last; academy scenarios
//! drop BUILD_IN and use the first 19. Movement is 8-compass; Sprint is a
//! sticky per-player flag that doubles move distance until released.

use crate::{Error, Result};

pub const N_ACTIONS_FULL: usize = 20;
pub const N_ACTIONS_ACADEMY: usize = 19;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Action {
    Idle = 0,
    MoveLeft = 1,
    MoveTopLeft = 2,
    MoveTop = 3,
    MoveTopRight = 4,
    MoveRight = 5,
    MoveBottomRight = 6,
    MoveBottom = 7,
    MoveBottomLeft = 8,
    LongPass = 9,
    HighPass = 10,
    ShortPass = 11,
    Shot = 12,
    Sprint = 13,
    ReleaseDirection = 14,
    ReleaseSprint = 15,
    Slide = 16,
    Dribble = 17,
    ReleaseDribble = 18,
    BuildIn = 19,
}

pub const ALL_ACTIONS: [Action; N_ACTIONS_FULL] = [
    Action::Idle,
    Action::MoveLeft,
    Action::MoveTopLeft,
    Action::MoveTop,
    Action::MoveTopRight,
    Action::MoveRight,
    Action::MoveBottomRight,
    Action::MoveBottom,
    Action::MoveBottomLeft,
    Action::LongPass,
    Action::HighPass,
    Action::ShortPass,
    Action::Shot,
    Action::Sprint,
    Action::ReleaseDirection,
    Action::ReleaseSprint,
    Action::Slide,
    Action::Dribble,
    Action::ReleaseDribble,
    Action::BuildIn,
];

impl Action {
    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Result<Action> {
        ALL_ACTIONS
            .get(i)
            .copied()
            .ok_or_else(|| Error::invalid(format!("action index {i} out of range 0..{N_ACTIONS_FULL}")))
    }

    /// Unit displacement for movement actions. Grid y grows downward, so
    /// "top" is -y.
    pub fn move_delta(self) -> Option<(i32, i32)> {
        match self {
            Action::MoveLeft => Some((-1, 0)),
            Action::MoveTopLeft => Some((-1, -1)),
            Action::MoveTop => Some((0, -1)),
            Action::MoveTopRight => Some((1, -1)),
            Action::MoveRight => Some((1, 0)),
            Action::MoveBottomRight => Some((1, 1)),
            Action::MoveBottom => Some((0, 1)),
            Action::MoveBottomLeft => Some((-1, 1)),
            _ => None,
        }
    }

    /// The movement action whose delta is (dx, dy); (0, 0) maps to Idle.
    pub fn from_move_delta(dx: i32, dy: i32) -> Action {
        match (dx.signum(), dy.signum()) {
            (0, 0) => Action::Idle,
            (-1, 0) => Action::MoveLeft,
            (-1, -1) => Action::MoveTopLeft,
            (0, -1) => Action::MoveTop,
            (1, -1) => Action::MoveTopRight,
            (1, 0) => Action::MoveRight,
            (1, 1) => Action::MoveBottomRight,
            (0, 1) => Action::MoveBottom,
            (-1, 1) => Action::MoveBottomLeft,
            _ => unreachable!(),
        }
    }

    /// Left-right mirror of the action (x component of movement flipped).
    /// Non-movement actions are their own mirror.
    pub fn mirror_x(self) -> Action {
        match self.move_delta() {
            Some((dx, dy)) => Action::from_move_delta(-dx, dy),
            None => self,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn indices_are_stable_and_build_in_is_last() {
        for (i, a) in ALL_ACTIONS.iter().enumerate() {
            assert_eq!(a.index(), i);
            assert_eq!(Action::from_index(i).unwrap(), *a);
        }
        assert_eq!(Action::BuildIn.index(), N_ACTIONS_FULL - 1);
        assert!(Action::from_index(N_ACTIONS_FULL).is_err());
    }

    #[test]
    fn move_deltas_round_trip() {
        for a in ALL_ACTIONS {
            if let Some((dx, dy)) = a.move_delta() {
                assert_eq!(Action::from_move_delta(dx, dy), a);
            }
        }
    }

    #[test]
    fn mirror_is_an_involution() {
        for a in ALL_ACTIONS {
            assert_eq!(a.mirror_x().mirror_x(), a);
        }
        assert_eq!(Action::MoveLeft.mirror_x(), Action::MoveRight);
        assert_eq!(Action::MoveTopLeft.mirror_x(), Action::MoveTopRight);
        assert_eq!(Action::Shot.mirror_x(), Action::Shot);
    }
}
