//! Match evaluation: the head-to-head harness, aggregate reports with
//! cumulative curves, and TrueSkill ranking of policy variants.

mod matches;
mod ranking;
mod report;
mod trueskill;

pub use matches::{play_match, Participant};
pub use ranking::{leaderboard_csv, rank_round_robin, Contender, RankEntry};
pub use report::{aggregate, cumulative_csv, EvalReport, MatchResult, Outcome};
pub use trueskill::{draw_margin, trueskill_update, Rating, BETA_TS, MU0, SIGMA0};
