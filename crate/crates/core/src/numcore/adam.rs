//! Adam with bias correction.

use serde::{Deserialize, Serialize};

use super::network::{GradientBundle, Network};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = self.lr > 0.0
            && self.eps > 0.0
            && self.beta1 > 0.0
            && self.beta1 < 1.0
            && self.beta2 > 0.0
            && self.beta2 < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid Adam settings {self:?}")))
        }
    }
}

/// Moment buffers, one per parameter slice.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    config: AdamConfig,
    first_moment: Vec<Vec<f64>>,
    second_moment: Vec<Vec<f64>>,
    step_count: u64,
}

impl AdamState {
    pub fn new(shapes: &[usize], config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Self {
            config,
            first_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            second_moment: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step_count: 0,
        })
    }

    pub fn for_network(network: &Network, config: AdamConfig) -> Result<Self> {
        let shapes: Vec<usize> = network
            .layers()
            .iter()
            .flat_map(|l| [l.weights().len(), l.bias().len()])
            .collect();
        Self::new(&shapes, config)
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    /// One bias-corrected update. Gradients are validated before any
    /// parameter is touched, so a rejected step leaves everything unchanged.
    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[&[f64]]) -> Result<()> {
        if params.len() != self.first_moment.len() || grads.len() != self.first_moment.len() {
            return Err(Error::Dimension(format!(
                "optimizer tracks {} parameter slices, got {} params / {} grads",
                self.first_moment.len(),
                params.len(),
                grads.len()
            )));
        }
        for (i, ((p, g), m)) in params.iter().zip(grads).zip(&self.first_moment).enumerate() {
            if p.len() != m.len() || g.len() != m.len() {
                return Err(Error::Dimension(format!(
                    "slice {i}: expected {} entries, got {} params / {} grads",
                    m.len(),
                    p.len(),
                    g.len()
                )));
            }
            if let Some(j) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!(
                    "gradient slice {i} entry {j} is {}",
                    g[j]
                )));
            }
        }

        self.step_count += 1;
        let AdamConfig {
            lr,
            beta1,
            beta2,
            eps,
        } = self.config;
        let t = self.step_count as i32;
        let bc1 = 1.0 - beta1.powi(t);
        let bc2 = 1.0 - beta2.powi(t);
        for (((p, g), m), v) in params
            .iter_mut()
            .zip(grads)
            .zip(&mut self.first_moment)
            .zip(&mut self.second_moment)
        {
            for i in 0..p.len() {
                let gi = g[i];
                m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
        Ok(())
    }
}

/// Applies one Adam update to every parameter of `network`.
pub fn adam_step(network: &mut Network, grads: &GradientBundle, state: &mut AdamState) -> Result<()> {
    let g = grads.slices();
    let mut p = network.param_slices_mut();
    state.step(&mut p, &g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn scalar_step(state: &mut AdamState, p: &mut f64, g: f64) {
        let mut buf = [*p];
        state.step(&mut [&mut buf[..]], &[&[g][..]]).unwrap();
        *p = buf[0];
    }

    #[test]
    fn zero_gradient_is_a_fixed_point() {
        let mut state = AdamState::new(&[3], AdamConfig::default()).unwrap();
        let mut p = [0.3, -1.2, 4.0];
        for _ in 0..5 {
            state.step(&mut [&mut p[..]], &[&[0.0; 3][..]]).unwrap();
        }
        assert_eq!(p, [0.3, -1.2, 4.0]);
        assert_eq!(state.step_count(), 5);
    }

    #[test]
    fn first_step_moves_by_lr() {
        // t=1: m_hat = g, v_hat = g^2, so the step is lr * g / (|g| + eps)
        let mut state = AdamState::new(&[1], AdamConfig::with_lr(0.1)).unwrap();
        let mut p = 0.0;
        scalar_step(&mut state, &mut p, 1.0);
        assert_abs_diff_eq!(p, -0.1 / (1.0 + 1e-8), epsilon = 1e-15);
        assert_eq!(state.step_count(), 1);
    }

    #[test]
    fn update_is_not_linear_in_the_gradient_history() {
        // Hand evaluation, lr=0.1, grads 1 then 3:
        //   t=1: m=0.1, v=0.001 -> step 0.1
        //   t=2: m=0.39, v=0.0099990, m_hat=0.39/0.19, v_hat=0.009999/0.001999
        let mut two = AdamState::new(&[1], AdamConfig::with_lr(0.1)).unwrap();
        let mut p_two = 0.0;
        scalar_step(&mut two, &mut p_two, 1.0);
        scalar_step(&mut two, &mut p_two, 3.0);
        let m_hat: f64 = 0.39 / 0.19;
        let v_hat: f64 = (0.999 * 0.001 + 0.001 * 9.0) / (1.0 - 0.999f64.powi(2));
        let expected = -0.1 / (1.0 + 1e-8) - 0.1 * m_hat / (v_hat.sqrt() + 1e-8);
        assert_abs_diff_eq!(p_two, expected, epsilon = 1e-12);

        let mut one = AdamState::new(&[1], AdamConfig::with_lr(0.2)).unwrap();
        let mut p_one = 0.0;
        scalar_step(&mut one, &mut p_one, 2.0);
        assert!((p_two - p_one).abs() > 1e-3);
    }

    #[test]
    fn constant_gradient_two_steps_equal_one_doubled_step() {
        // With a constant gradient the bias-corrected moments are exactly g and g^2.
        let mut two = AdamState::new(&[1], AdamConfig::with_lr(0.1)).unwrap();
        let mut p_two = 0.0;
        scalar_step(&mut two, &mut p_two, 1.0);
        scalar_step(&mut two, &mut p_two, 1.0);
        let mut one = AdamState::new(&[1], AdamConfig::with_lr(0.2)).unwrap();
        let mut p_one = 0.0;
        scalar_step(&mut one, &mut p_one, 1.0);
        assert_abs_diff_eq!(p_two, p_one, epsilon = 1e-12);
    }

    #[test]
    fn non_finite_gradient_aborts_without_mutation() {
        let mut state = AdamState::new(&[2], AdamConfig::default()).unwrap();
        let mut p = [1.0, 2.0];
        let err = state.step(&mut [&mut p[..]], &[&[0.5, f64::NAN][..]]);
        assert!(matches!(err, Err(Error::NonFinite(_))));
        assert_eq!(p, [1.0, 2.0]);
        assert_eq!(state.step_count(), 0);
    }

    #[test]
    fn shape_mismatch_is_rejected() {
        let mut state = AdamState::new(&[2], AdamConfig::default()).unwrap();
        let mut p = [1.0, 2.0, 3.0];
        assert!(state.step(&mut [&mut p[..]], &[&[0.0; 3][..]]).is_err());
    }

    #[test]
    fn invalid_config_is_rejected() {
        assert!(AdamState::new(&[1], AdamConfig::with_lr(0.0)).is_err());
        let bad = AdamConfig {
            beta1: 1.0,
            ..AdamConfig::default()
        };
        assert!(AdamState::new(&[1], bad).is_err());
    }
}
