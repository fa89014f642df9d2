//! Round-robin TrueSkill ranking over a pool of named contenders.
//!
//! Every ordered pair plays a fixed number of rounds; match seeds derive from
//! the pair's names so the schedule is invariant under reordering of the
//! contender list. Ratings are then updated sequentially in a seeded shuffle
//! of all results, with the draw margin estimated from the observed draw
//! frequency.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::env::PitchConfig;
use crate::eval::matches::{play_match, Participant};
use crate::eval::report::Outcome;
use crate::eval::trueskill::{trueskill_update, Rating};
use crate::{Error, Result};

pub struct Contender<'a> {
    pub name: String,
    pub participant: Participant<'a>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankEntry {
    pub name: String,
    pub rating: Rating,
    pub wins: u32,
    pub draws: u32,
    pub losses: u32,
}

fn pair_seed(seed: u64, first: &str, second: &str) -> u64 {
    let mut h: u64 = 0xCBF2_9CE4_8422_2325;
    let mut eat = |bytes: &[u8]| {
        for &b in bytes {
            h ^= b as u64;
            h = h.wrapping_mul(0x0000_0100_0000_01B3);
        }
    };
    eat(&seed.to_le_bytes());
    eat(first.as_bytes());
    eat(&[0xFF]);
    eat(second.as_bytes());
    h
}

/// Play every ordered contender pair and return the leaderboard sorted by
/// conservative rating (mu - 3 sigma), best first.
pub fn rank_round_robin(
    config: &PitchConfig,
    contenders: &[Contender],
    rounds_per_pair: usize,
    steps_per_round: u32,
    seed: u64,
) -> Result<Vec<RankEntry>> {
    if contenders.len() < 2 {
        return Err(Error::invalid("ranking needs at least two contenders"));
    }
    for c in contenders {
        if c.name.is_empty() {
            return Err(Error::invalid("contender names must be nonempty"));
        }
    }
    let mut order: Vec<usize> = (0..contenders.len()).collect();
    order.sort_by(|&x, &y| contenders[x].name.cmp(&contenders[y].name));
    for pair in order.windows(2) {
        if contenders[pair[0]].name == contenders[pair[1]].name {
            return Err(Error::invalid(format!(
                "duplicate contender name {:?}",
                contenders[pair[0]].name
            )));
        }
    }

    let mut matches: Vec<(usize, usize, Outcome)> = Vec::new();
    for &i in &order {
        for &j in &order {
            if i == j {
                continue;
            }
            let s = pair_seed(seed, &contenders[i].name, &contenders[j].name);
            let results = play_match(
                config,
                contenders[i].participant,
                contenders[j].participant,
                rounds_per_pair,
                steps_per_round,
                s,
            )?;
            for r in results {
                matches.push((i, j, r.outcome));
            }
        }
    }

    let draws = matches.iter().filter(|(_, _, o)| *o == Outcome::Draw).count();
    let draw_probability = draws as f64 / matches.len() as f64;

    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD1CE);
    for k in (1..matches.len()).rev() {
        let swap = rng.gen_range(0..=k);
        matches.swap(k, swap);
    }

    let mut ratings = vec![Rating::default(); contenders.len()];
    let mut tallies = vec![(0u32, 0u32, 0u32); contenders.len()];
    for &(i, j, outcome) in &matches {
        let (ri, rj) = trueskill_update(ratings[i], ratings[j], outcome, draw_probability)?;
        ratings[i] = ri;
        ratings[j] = rj;
        match outcome {
            Outcome::Win => {
                tallies[i].0 += 1;
                tallies[j].2 += 1;
            }
            Outcome::Draw => {
                tallies[i].1 += 1;
                tallies[j].1 += 1;
            }
            Outcome::Loss => {
                tallies[i].2 += 1;
                tallies[j].0 += 1;
            }
        }
    }

    let mut entries: Vec<RankEntry> = contenders
        .iter()
        .enumerate()
        .map(|(idx, c)| RankEntry {
            name: c.name.clone(),
            rating: ratings[idx],
            wins: tallies[idx].0,
            draws: tallies[idx].1,
            losses: tallies[idx].2,
        })
        .collect();
    entries.sort_by(|a, b| {
        b.rating
            .conservative()
            .total_cmp(&a.rating.conservative())
            .then_with(|| a.name.cmp(&b.name))
    });
    Ok(entries)
}

pub fn leaderboard_csv(entries: &[RankEntry]) -> String {
    let mut out = String::from("rank,name,mu,sigma,conservative,wins,draws,losses\n");
    for (i, e) in entries.iter().enumerate() {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            i + 1,
            e.name,
            e.rating.mu,
            e.rating.sigma,
            e.rating.conservative(),
            e.wins,
            e.draws,
            e.losses,
        ));
    }
    out
}
