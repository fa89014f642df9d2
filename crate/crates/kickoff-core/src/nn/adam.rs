//! Bias-corrected Adam.

use crate::error::{Error, Result};
use crate::nn::params::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> AdamConfig {
        AdamConfig {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> AdamConfig {
        AdamConfig {
            lr,
            ..AdamConfig::default()
        }
    }
}

/// Optimizer state: first and second moments per parameter, positionally
/// aligned with the [`ParamSet`] it was created for. The learning rate is
/// fixed for the lifetime of the state.
#[derive(Debug, Clone, PartialEq)]
pub struct Adam {
    pub config: AdamConfig,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    t: u64,
}

impl Adam {
    pub fn new(params: &ParamSet, config: AdamConfig) -> Adam {
        Adam {
            config,
            m: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
            v: params.iter().map(|p| vec![0.0; p.value.len()]).collect(),
            t: 0,
        }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }

    /// One update. `grads` must be positionally aligned with `params`.
    pub fn step(&mut self, params: &mut ParamSet, grads: &[Vec<f64>]) -> Result<()> {
        if grads.len() != self.m.len() || params.len() != self.m.len() {
            return Err(Error::invalid(format!(
                "adam_step: {} params, {} grads, state for {}",
                params.len(),
                grads.len(),
                self.m.len()
            )));
        }
        self.t += 1;
        let t = self.t as i32;
        let c = self.config;
        let bc1 = 1.0 - c.beta1.powi(t);
        let bc2 = 1.0 - c.beta2.powi(t);
        for ((param, g), (m, v)) in params
            .iter_mut()
            .zip(grads)
            .zip(self.m.iter_mut().zip(self.v.iter_mut()))
        {
            if g.len() != param.value.len() {
                return Err(Error::ShapeMismatch {
                    op: "adam_step",
                    lhs: param.value.shape().to_vec(),
                    rhs: vec![g.len()],
                });
            }
            for ((p, &gi), (mi, vi)) in param
                .value
                .data_mut()
                .iter_mut()
                .zip(g)
                .zip(m.iter_mut().zip(v.iter_mut()))
            {
                *mi = c.beta1 * *mi + (1.0 - c.beta1) * gi;
                *vi = c.beta2 * *vi + (1.0 - c.beta2) * gi * gi;
                let m_hat = *mi / bc1;
                let v_hat = *vi / bc2;
                *p -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::tensor::Tensor;
    use approx::assert_abs_diff_eq;

    fn one_param(values: Vec<f64>) -> ParamSet {
        let mut ps = ParamSet::new();
        let n = values.len();
        ps.insert("w", Tensor::from_vec(&[n], values).unwrap()).unwrap();
        ps
    }

    #[test]
    fn zero_gradients_leave_params_unchanged() {
        let mut ps = one_param(vec![1.0, -2.0, 3.0]);
        let before = ps.clone();
        let mut adam = Adam::new(&ps, AdamConfig::default());
        adam.step(&mut ps, &[vec![0.0; 3]]).unwrap();
        assert_eq!(ps, before);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn first_step_moves_by_lr_times_sign() {
        let mut ps = one_param(vec![0.0, 0.0]);
        let cfg = AdamConfig::default();
        let mut adam = Adam::new(&ps, cfg);
        adam.step(&mut ps, &[vec![2.5, -0.3]]).unwrap();
        // Bias correction makes m_hat = g and v_hat = g^2 on step one, so the
        // update is lr * g / (|g| + eps) which is lr * sign(g) up to eps.
        let w = ps.get("w").unwrap().data();
        assert_abs_diff_eq!(w[0], -cfg.lr, epsilon = 1e-9);
        assert_abs_diff_eq!(w[1], cfg.lr, epsilon = 1e-9);
    }

    /// Three steps on f(x) = 0.5 x^2 against a scalar transcription of the
    /// update rule, written independently of the vectorized loop above.
    #[test]
    fn three_steps_match_scalar_oracle() {
        let cfg = AdamConfig {
            lr: 0.1,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        };
        let mut x_oracle = 1.7f64;
        let (mut m, mut v) = (0.0f64, 0.0f64);
        let mut expected = Vec::new();
        for t in 1..=3 {
            let g = x_oracle;
            m = cfg.beta1 * m + (1.0 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1.0 - cfg.beta2) * g * g;
            let m_hat = m / (1.0 - cfg.beta1.powi(t));
            let v_hat = v / (1.0 - cfg.beta2.powi(t));
            x_oracle -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
            expected.push(x_oracle);
        }

        let mut ps = one_param(vec![1.7]);
        let mut adam = Adam::new(&ps, cfg);
        for want in expected {
            let g = ps.get("w").unwrap().data()[0];
            adam.step(&mut ps, &[vec![g]]).unwrap();
            assert_abs_diff_eq!(ps.get("w").unwrap().data()[0], want, epsilon = 1e-12);
        }
    }

    #[test]
    fn misaligned_grads_are_rejected() {
        let mut ps = one_param(vec![1.0]);
        let mut adam = Adam::new(&ps, AdamConfig::default());
        assert!(adam.step(&mut ps, &[]).is_err());
        assert!(adam.step(&mut ps, &[vec![0.0, 0.0]]).is_err());
    }
}
