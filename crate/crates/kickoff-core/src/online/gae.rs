//! Generalized advantage estimation plus the per-batch advantage normalizer
//! and the running return normalizer used by the value head.

use crate::{Error, Result};

/// Reverse-scan GAE. `values[t]` is V(s_t) under the behavior parameters and
/// `bootstrap` stands in for V(s_T) after the final step; `dones[t]` cuts
/// both the TD target and the recursion at episode boundaries.
pub fn gae(
    rewards: &[f64],
    values: &[f64],
    dones: &[bool],
    bootstrap: f64,
    gamma: f64,
    lambda: f64,
) -> Result<Vec<f64>> {
    if rewards.len() != values.len() || rewards.len() != dones.len() {
        return Err(Error::invalid(format!(
            "gae needs aligned inputs, got {} rewards, {} values, {} dones",
            rewards.len(),
            values.len(),
            dones.len()
        )));
    }
    if !(0.0..=1.0).contains(&gamma) || !(0.0..=1.0).contains(&lambda) {
        return Err(Error::invalid(format!(
            "gamma and lambda must lie in [0, 1], got {gamma} and {lambda}"
        )));
    }
    let t_max = rewards.len();
    let mut adv = vec![0.0; t_max];
    let mut acc = 0.0;
    for t in (0..t_max).rev() {
        let cont = if dones[t] { 0.0 } else { 1.0 };
        let next_v = if t + 1 < t_max { values[t + 1] } else { bootstrap };
        let delta = rewards[t] + gamma * cont * next_v - values[t];
        acc = delta + gamma * lambda * cont * acc;
        adv[t] = acc;
    }
    Ok(adv)
}

/// Standardize advantages in place to zero mean and unit variance.
pub fn normalize_advantages(adv: &mut [f64]) -> Result<()> {
    if adv.is_empty() {
        return Err(Error::invalid("cannot normalize an empty advantage batch"));
    }
    let n = adv.len() as f64;
    let mean = adv.iter().sum::<f64>() / n;
    let var = adv.iter().map(|a| (a - mean) * (a - mean)).sum::<f64>() / n;
    let std = var.sqrt();
    if std > 0.0 {
        for a in adv.iter_mut() {
            *a = (*a - mean) / std;
        }
    } else {
        for a in adv.iter_mut() {
            *a = 0.0;
        }
    }
    Ok(())
}

/// Running mean/std of value targets. The value head is trained against
/// standardized returns and its predictions are mapped back through the same
/// statistics, a plain substitute for PopArt-style rescaling.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueNormalizer {
    mean: f64,
    m2: f64,
    count: f64,
    enabled: bool,
}

impl ValueNormalizer {
    pub fn new(enabled: bool) -> ValueNormalizer {
        ValueNormalizer { mean: 0.0, m2: 0.0, count: 0.0, enabled }
    }

    pub fn update(&mut self, targets: &[f64]) {
        if !self.enabled {
            return;
        }
        for &x in targets {
            self.count += 1.0;
            let d = x - self.mean;
            self.mean += d / self.count;
            self.m2 += d * (x - self.mean);
        }
    }

    fn std(&self) -> f64 {
        if self.count < 2.0 {
            return 1.0;
        }
        (self.m2 / self.count).sqrt().max(1e-6)
    }

    pub fn normalize(&self, x: f64) -> f64 {
        if !self.enabled {
            return x;
        }
        (x - self.mean) / self.std()
    }

    pub fn denormalize(&self, v: f64) -> f64 {
        if !self.enabled {
            return v;
        }
        v * self.std() + self.mean
    }
}
