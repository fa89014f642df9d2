//! Two-player TrueSkill rating updates.
//!
//! Skills are Gaussian (mu, sigma); a match outcome shifts both ratings by
//! the moments of the truncated performance-difference distribution. The
//! draw margin is derived from a supplied draw probability. No skill drift
//! between matches (tau = 0): rated artifacts are fixed policies.

use statrs::distribution::{Continuous, ContinuousCDF, Normal};

use crate::eval::report::Outcome;
use crate::{Error, Result};

pub const MU0: f64 = 25.0;
pub const SIGMA0: f64 = MU0 / 3.0;
pub const BETA_TS: f64 = MU0 / 6.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rating {
    pub mu: f64,
    pub sigma: f64,
}

impl Rating {
    pub fn new(mu: f64, sigma: f64) -> Result<Rating> {
        if !mu.is_finite() || !sigma.is_finite() || sigma <= 0.0 {
            return Err(Error::invalid(format!(
                "rating needs finite mu and sigma > 0, got ({mu}, {sigma})"
            )));
        }
        Ok(Rating { mu, sigma })
    }

    /// Conservative skill estimate used for leaderboard ordering.
    pub fn conservative(&self) -> f64 {
        self.mu - 3.0 * self.sigma
    }
}

impl Default for Rating {
    fn default() -> Rating {
        Rating { mu: MU0, sigma: SIGMA0 }
    }
}

fn std_normal() -> Normal {
    Normal::new(0.0, 1.0).expect("unit normal")
}

/// Margin within which a performance difference counts as a draw, chosen so
/// two equally skilled players draw with the given probability.
pub fn draw_margin(draw_probability: f64, beta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&draw_probability) {
        return Err(Error::invalid(format!(
            "draw probability must lie in [0, 1), got {draw_probability}"
        )));
    }
    if beta <= 0.0 {
        return Err(Error::invalid(format!("beta must be positive, got {beta}")));
    }
    Ok(std_normal().inverse_cdf((draw_probability + 1.0) / 2.0) * std::f64::consts::SQRT_2 * beta)
}

fn v_w_win(t: f64, eps: f64) -> (f64, f64) {
    let norm = std_normal();
    let x = t - eps;
    let denom = norm.cdf(x);
    if denom <= f64::MIN_POSITIVE {
        return (-x, 1.0);
    }
    let v = norm.pdf(x) / denom;
    (v, v * (v + x))
}

fn v_w_draw(t: f64, eps: f64) -> (f64, f64) {
    let norm = std_normal();
    let abs_t = t.abs();
    let a = eps - abs_t;
    let b = -eps - abs_t;
    let denom = norm.cdf(a) - norm.cdf(b);
    if denom <= f64::MIN_POSITIVE {
        let v = if t < 0.0 { -a } else { a };
        return (v, 1.0);
    }
    let v_abs = (norm.pdf(b) - norm.pdf(a)) / denom;
    let v = if t < 0.0 { -v_abs } else { v_abs };
    let w = v_abs * v_abs + (a * norm.pdf(a) - b * norm.pdf(b)) / denom;
    (v, w)
}

/// Posterior ratings after one match between `a` and `b`, outcome given from
/// `a`'s perspective.
pub fn trueskill_update(
    a: Rating,
    b: Rating,
    outcome: Outcome,
    draw_probability: f64,
) -> Result<(Rating, Rating)> {
    Rating::new(a.mu, a.sigma)?;
    Rating::new(b.mu, b.sigma)?;
    if let Outcome::Loss = outcome {
        let (b2, a2) = trueskill_update(b, a, Outcome::Win, draw_probability)?;
        return Ok((a2, b2));
    }
    let eps = draw_margin(draw_probability, BETA_TS)?;
    if outcome == Outcome::Draw && eps == 0.0 {
        return Err(Error::invalid(
            "draw outcome needs a positive draw probability to set the margin",
        ));
    }

    let c2 = 2.0 * BETA_TS * BETA_TS + a.sigma * a.sigma + b.sigma * b.sigma;
    let c = c2.sqrt();
    let t = (a.mu - b.mu) / c;
    let eps_c = eps / c;

    let (va, wa, vb, wb) = match outcome {
        Outcome::Win => {
            let (v, w) = v_w_win(t, eps_c);
            (v, w, -v, w)
        }
        Outcome::Draw => {
            let (v, w) = v_w_draw(t, eps_c);
            (v, w, -v, w)
        }
        Outcome::Loss => unreachable!("handled by the flipped recursion"),
    };

    let update = |r: Rating, v: f64, w: f64| {
        let s2 = r.sigma * r.sigma;
        let mu = r.mu + s2 / c * v;
        let sigma = (s2 * (1.0 - s2 / c2 * w).max(f64::MIN_POSITIVE)).sqrt();
        Rating { mu, sigma }
    };
    Ok((update(a, va, wa), update(b, vb, wb)))
}
