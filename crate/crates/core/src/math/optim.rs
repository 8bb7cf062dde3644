//! Adam with bias-corrected moment estimates.

use super::params::ParamStore;
use super::tensor::Tensor;
use super::MathError;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    config: AdamConfig,
    first: Vec<Tensor>,
    second: Vec<Tensor>,
    step: u64,
}

impl Adam {
    pub fn new(config: AdamConfig, store: &ParamStore) -> Self {
        let zeros = || {
            store
                .entries()
                .iter()
                .map(|e| Tensor::zeros(e.value.shape()))
                .collect::<Vec<_>>()
        };
        Self {
            config,
            first: zeros(),
            second: zeros(),
            step: 0,
        }
    }

    pub fn config(&self) -> &AdamConfig {
        &self.config
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    /// Applies one update. A non-finite or mis-shaped gradient rejects the
    /// whole step and leaves parameters and state untouched.
    pub fn step(&mut self, store: &mut ParamStore, grads: &[Tensor]) -> Result<(), MathError> {
        if grads.len() != store.len() {
            return Err(MathError::LengthMismatch {
                expected: store.len(),
                got: grads.len(),
            });
        }
        for (g, e) in grads.iter().zip(store.entries()) {
            if g.shape() != e.value.shape() {
                return Err(MathError::ShapeMismatch {
                    op: "adam",
                    left: e.value.shape().to_vec(),
                    right: g.shape().to_vec(),
                });
            }
            g.check_finite("adam gradient")?;
        }
        self.step += 1;
        let AdamConfig {
            learning_rate,
            beta1,
            beta2,
            epsilon,
        } = self.config;
        let c1 = 1.0 - beta1.powi(self.step as i32);
        let c2 = 1.0 - beta2.powi(self.step as i32);
        for (i, id) in store.ids().collect::<Vec<_>>().into_iter().enumerate() {
            let g = grads[i].data();
            let m = self.first[i].data_mut();
            let v = self.second[i].data_mut();
            let p = store.value_mut(id).data_mut();
            for j in 0..g.len() {
                m[j] = beta1 * m[j] + (1.0 - beta1) * g[j];
                v[j] = beta2 * v[j] + (1.0 - beta2) * g[j] * g[j];
                let m_hat = m[j] / c1;
                let v_hat = v[j] / c2;
                p[j] -= learning_rate * m_hat / (v_hat.sqrt() + epsilon);
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::params::ParamKind;

    fn store_with(values: &[f64]) -> ParamStore {
        let mut s = ParamStore::new();
        for (i, &v) in values.iter().enumerate() {
            s.add(format!("p{i}"), ParamKind::Weight, Tensor::scalar(v));
        }
        s
    }

    #[test]
    fn zero_gradient_leaves_params_unchanged() {
        let mut s = store_with(&[1.5, -2.0]);
        let before = s.clone();
        let mut adam = Adam::new(AdamConfig::default(), &s);
        for _ in 0..5 {
            adam.step(&mut s, &[Tensor::scalar(0.0), Tensor::scalar(0.0)])
                .unwrap();
        }
        assert_eq!(s, before);
        assert_eq!(adam.steps_taken(), 5);
    }

    #[test]
    fn single_step_matches_hand_computation() {
        // x = 2, g = 0.5, lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8
        // m = 0.05, v = 0.00025; m_hat = 0.5, v_hat = 0.25
        // x' = 2 - 0.1 * 0.5 / (0.5 + 1e-8)
        let mut s = store_with(&[2.0]);
        let cfg = AdamConfig {
            learning_rate: 0.1,
            ..AdamConfig::default()
        };
        let mut adam = Adam::new(cfg, &s);
        adam.step(&mut s, &[Tensor::scalar(0.5)]).unwrap();
        let expected = 2.0 - 0.1 * 0.5 / (0.5 + 1e-8);
        assert!((s.value(s.find("p0").unwrap()).item().unwrap() - expected).abs() < 1e-15);
        assert!((expected - 1.900_000_002).abs() < 1e-9);
    }

    #[test]
    fn identical_params_identical_updates() {
        let mut s = store_with(&[0.3, 0.3]);
        let mut adam = Adam::new(AdamConfig::default(), &s);
        for k in 0..10 {
            let g = 0.1 * k as f64 - 0.4;
            adam.step(&mut s, &[Tensor::scalar(g), Tensor::scalar(g)])
                .unwrap();
        }
        let flat = s.flatten();
        assert_eq!(flat[0].to_bits(), flat[1].to_bits());
    }

    #[test]
    fn non_finite_gradient_rejected() {
        let mut s = store_with(&[1.0]);
        let before = s.clone();
        let mut adam = Adam::new(AdamConfig::default(), &s);
        let bad = Tensor::from_parts(vec![], vec![f64::NAN]);
        assert!(adam.step(&mut s, &[bad]).is_err());
        assert_eq!(s, before);
        assert_eq!(adam.steps_taken(), 0);
    }
}
