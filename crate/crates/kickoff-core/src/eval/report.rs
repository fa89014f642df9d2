//! Per-round match results and their aggregate statistics: win/draw/failure
//! rates, mean goal difference, and cumulative-over-rounds curves in CSV form.

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Win,
    Draw,
    Loss,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MatchResult {
    pub goals_for: u32,
    pub goals_against: u32,
    pub outcome: Outcome,
}

impl MatchResult {
    pub fn new(goals_for: u32, goals_against: u32) -> MatchResult {
        let outcome = match goals_for.cmp(&goals_against) {
            std::cmp::Ordering::Greater => Outcome::Win,
            std::cmp::Ordering::Equal => Outcome::Draw,
            std::cmp::Ordering::Less => Outcome::Loss,
        };
        MatchResult { goals_for, goals_against, outcome }
    }

    pub fn goal_diff(&self) -> f64 {
        self.goals_for as f64 - self.goals_against as f64
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub rounds: usize,
    pub win_rate: f64,
    pub draw_rate: f64,
    pub failure_rate: f64,
    pub mean_goal_diff: f64,
    pub results: Vec<MatchResult>,
}

pub fn aggregate(results: &[MatchResult]) -> Result<EvalReport> {
    if results.is_empty() {
        return Err(Error::invalid("aggregate needs at least one match result"));
    }
    let rounds = results.len();
    let mut wins = 0usize;
    let mut draws = 0usize;
    let mut diff = 0.0;
    for r in results {
        match r.outcome {
            Outcome::Win => wins += 1,
            Outcome::Draw => draws += 1,
            Outcome::Loss => {}
        }
        diff += r.goal_diff();
    }
    let n = rounds as f64;
    Ok(EvalReport {
        rounds,
        win_rate: wins as f64 / n,
        draw_rate: draws as f64 / n,
        failure_rate: (rounds - wins - draws) as f64 / n,
        mean_goal_diff: diff / n,
        results: results.to_vec(),
    })
}

/// Cumulative rates and goal difference after each round, one CSV row per
/// round. The final row equals the aggregate report.
pub fn cumulative_csv(results: &[MatchResult]) -> Result<String> {
    if results.is_empty() {
        return Err(Error::invalid("cumulative_csv needs at least one match result"));
    }
    let mut out = String::from("round,win_rate,draw_rate,failure_rate,goal_diff\n");
    let (mut wins, mut draws, mut losses) = (0u64, 0u64, 0u64);
    let mut diff = 0.0;
    for (i, r) in results.iter().enumerate() {
        match r.outcome {
            Outcome::Win => wins += 1,
            Outcome::Draw => draws += 1,
            Outcome::Loss => losses += 1,
        }
        diff += r.goal_diff();
        let n = (i + 1) as f64;
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            i + 1,
            wins as f64 / n,
            draws as f64 / n,
            losses as f64 / n,
            diff / n,
        ));
    }
    Ok(out)
}
