use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub learning_rate: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
}

fn default_beta1() -> f64 {
    0.9
}

fn default_beta2() -> f64 {
    0.999
}

fn default_epsilon() -> f64 {
    1e-8
}

impl AdamConfig {
    pub fn with_learning_rate(learning_rate: f64) -> Self {
        Self {
            learning_rate,
            beta1: default_beta1(),
            beta2: default_beta2(),
            epsilon: default_epsilon(),
        }
    }
}

/// Adam optimizer state with bias-corrected moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub config: AdamConfig,
    step_count: u64,
    first_moment: Vec<f64>,
    second_moment: Vec<f64>,
}

impl AdamState {
    pub fn new(config: AdamConfig, len: usize) -> Self {
        Self {
            config,
            step_count: 0,
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn len(&self) -> usize {
        self.first_moment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.first_moment.is_empty()
    }

    pub fn first_moment(&self) -> &[f64] {
        &self.first_moment
    }

    pub fn second_moment(&self) -> &[f64] {
        &self.second_moment
    }

    fn check(&self, params_len: usize, grads: &[f64]) -> Result<()> {
        if params_len != self.len() || grads.len() != self.len() {
            return Err(Error::DimensionMismatch {
                context: "adam step",
                expected: self.len(),
                got: if params_len != self.len() {
                    params_len
                } else {
                    grads.len()
                },
            });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::NonFiniteGradient(i));
        }
        Ok(())
    }

    /// Applies one update in place and returns the applied change.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<Vec<f64>> {
        self.check(params.len(), grads)?;
        self.step_count += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let t = self.step_count as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        let mut delta = Vec::with_capacity(params.len());
        for (((p, &g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(self.first_moment.iter_mut())
            .zip(self.second_moment.iter_mut())
        {
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            let d = -learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            *p += d;
            delta.push(d);
        }
        Ok(delta)
    }

    /// The change [`step`](Self::step) would apply, computed on a shadow
    /// copy; `self` is left untouched.
    pub fn candidate_step(&self, grads: &[f64]) -> Result<Vec<f64>> {
        let mut shadow = self.clone();
        let mut scratch = vec![0.0; self.len()];
        shadow.step(&mut scratch, grads)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut adam = AdamState::new(AdamConfig::with_learning_rate(0.1), 2);
        let mut p = vec![1.0, -1.0];
        adam.step(&mut p, &[0.0, 0.0]).unwrap();
        assert_eq!(p, vec![1.0, -1.0]);
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn zero_gradient_decays_moments() {
        let mut adam = AdamState::new(AdamConfig::with_learning_rate(0.1), 2);
        let mut p = vec![1.0, -1.0];
        adam.step(&mut p, &[0.5, -0.5]).unwrap();
        let m = adam.first_moment().to_vec();
        let v = adam.second_moment().to_vec();
        adam.step(&mut p, &[0.0, 0.0]).unwrap();
        for i in 0..2 {
            assert!((adam.first_moment()[i] - 0.9 * m[i]).abs() < 1e-15);
            assert!((adam.second_moment()[i] - 0.999 * v[i]).abs() < 1e-15);
        }
    }

    #[test]
    fn first_step_is_sign_like() {
        let lr = 0.01;
        let mut adam = AdamState::new(AdamConfig::with_learning_rate(lr), 3);
        let g = [2.0, -0.5, 1e-3];
        let mut p = vec![0.0; 3];
        adam.step(&mut p, &g).unwrap();
        for i in 0..3 {
            let expected = -lr * g[i] / (g[i].abs() + 1e-8);
            assert!((p[i] - expected).abs() < 1e-15, "{i}: {} vs {expected}", p[i]);
        }
        assert_eq!(adam.step_count(), 1);
    }

    #[test]
    fn two_steps_constant_gradient() {
        // Hand computation with g = 0.2, lr = 0.1.
        // t=1: m=0.02, v=4e-5, m̂=0.2, v̂=0.04 → Δ = -0.1·0.2/(0.2+ε)
        // t=2: m=0.038, v=7.996e-5, m̂=0.038/0.19=0.2, v̂=7.996e-5/0.001999=0.04
        let g = 0.2;
        let mut adam = AdamState::new(AdamConfig::with_learning_rate(0.1), 1);
        let mut p = vec![1.0];
        adam.step(&mut p, &[g]).unwrap();
        let d1 = -0.1 * 0.2 / (0.04f64.sqrt() + 1e-8);
        assert!((p[0] - (1.0 + d1)).abs() < 1e-14);
        adam.step(&mut p, &[g]).unwrap();
        let m2: f64 = 0.9 * 0.02 + 0.1 * 0.2;
        let v2: f64 = 0.999 * 4e-5 + 0.001 * 0.04;
        let d2 = -0.1 * (m2 / 0.19) / ((v2 / (1.0 - 0.999f64.powi(2))).sqrt() + 1e-8);
        assert!((p[0] - (1.0 + d1 + d2)).abs() < 1e-14);
        assert_eq!(adam.step_count(), 2);
    }

    #[test]
    fn nan_gradient_is_an_error() {
        let mut adam = AdamState::new(AdamConfig::with_learning_rate(0.1), 2);
        let mut p = vec![0.0, 0.0];
        assert!(matches!(
            adam.step(&mut p, &[0.0, f64::NAN]),
            Err(Error::NonFiniteGradient(1))
        ));
        assert_eq!(adam.step_count(), 0);
    }

    #[test]
    fn candidate_step_does_not_mutate() {
        let mut adam = AdamState::new(AdamConfig::with_learning_rate(0.1), 2);
        let before = adam.clone();
        let delta = adam.candidate_step(&[1.0, -1.0]).unwrap();
        assert_eq!(adam, before);
        let mut p = vec![0.0, 0.0];
        let applied = adam.step(&mut p, &[1.0, -1.0]).unwrap();
        assert_eq!(delta, applied);
    }
}
