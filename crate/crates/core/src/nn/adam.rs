use serde::{Deserialize, Serialize};

use crate::error::{ensure_finite, Error, Result};

/// Bias-corrected Adam.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub first_moment: Vec<f64>,
    pub second_moment: Vec<f64>,
    pub step_count: u64,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl AdamState {
    pub fn new(len: usize, learning_rate: f64) -> Self {
        AdamState {
            first_moment: vec![0.0; len],
            second_moment: vec![0.0; len],
            step_count: 0,
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }

    pub fn with_betas(mut self, beta1: f64, beta2: f64) -> Self {
        self.beta1 = beta1;
        self.beta2 = beta2;
        self
    }

    /// Applies one update in place. A non-finite gradient leaves both the
    /// parameters and the state untouched.
    pub fn step(&mut self, params: &mut [f64], grad: &[f64]) -> Result<()> {
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config(format!(
                "learning rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if grad.len() != params.len() {
            return Err(Error::dim("adam gradient", params.len(), grad.len()));
        }
        if self.first_moment.len() != params.len() {
            return Err(Error::dim("adam moments", params.len(), self.first_moment.len()));
        }
        ensure_finite("adam gradient", grad)?;

        self.step_count += 1;
        let t = self.step_count as i32;
        let bias1 = 1.0 - self.beta1.powi(t);
        let bias2 = 1.0 - self.beta2.powi(t);
        for i in 0..params.len() {
            let g = grad[i];
            let m = self.beta1 * self.first_moment[i] + (1.0 - self.beta1) * g;
            let v = self.beta2 * self.second_moment[i] + (1.0 - self.beta2) * g * g;
            self.first_moment[i] = m;
            self.second_moment[i] = v;
            let m_hat = m / bias1;
            let v_hat = v / bias2;
            params[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
        }
        ensure_finite("parameters after adam step", params)
    }
}

pub fn adam_step(params: &mut [f64], grad: &[f64], state: &mut AdamState) -> Result<()> {
    state.step(params, grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_gradient_from_fresh_state_is_identity() {
        let mut p = vec![1.0, -2.0, 3.5];
        let mut s = AdamState::new(3, 1e-3);
        adam_step(&mut p, &[0.0; 3], &mut s).unwrap();
        assert_eq!(p, vec![1.0, -2.0, 3.5]);
        assert_eq!(s.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_learning_rate() {
        let mut p = vec![0.5];
        let mut s = AdamState::new(1, 1e-3);
        adam_step(&mut p, &[1.0], &mut s).unwrap();
        // m_hat = 1, v_hat = 1 -> delta = lr / (1 + eps)
        let expected = 0.5 - 1e-3 / (1.0 + 1e-8);
        assert!((p[0] - expected).abs() < 1e-15);
    }

    #[test]
    fn second_identical_step_matches_scalar_oracle() {
        let (lr, b1, b2, eps, g) = (0.01, 0.9, 0.999, 1e-8, 0.7);
        let mut p = vec![0.0];
        let mut s = AdamState::new(1, lr);
        adam_step(&mut p, &[g], &mut s).unwrap();
        let after_first = p[0];
        adam_step(&mut p, &[g], &mut s).unwrap();

        // scalar oracle
        let mut m = 0.0;
        let mut v = 0.0;
        let mut theta = 0.0f64;
        let mut deltas = vec![];
        for t in 1..=2 {
            m = b1 * m + (1.0 - b1) * g;
            v = b2 * v + (1.0 - b2) * g * g;
            let m_hat = m / (1.0 - f64::powi(b1, t));
            let v_hat = v / (1.0 - f64::powi(b2, t));
            let d = lr * m_hat / (v_hat.sqrt() + eps);
            theta -= d;
            deltas.push(d);
        }
        assert!((after_first + deltas[0]).abs() < 1e-15);
        assert!((p[0] - theta).abs() < 1e-15);
        assert_eq!(s.step_count, 2);
    }

    #[test]
    fn non_finite_gradient_is_rejected_with_index() {
        let mut p = vec![1.0, 2.0, 3.0];
        let mut s = AdamState::new(3, 1e-3);
        let err = adam_step(&mut p, &[0.0, 0.0, f64::INFINITY], &mut s).unwrap_err();
        assert!(matches!(err, Error::NonFinite { index: 2, .. }));
        assert_eq!(s.step_count, 0);
        assert_eq!(p, vec![1.0, 2.0, 3.0]);
    }

    proptest! {
        #[test]
        fn zero_gradient_is_identity_for_any_hyperparameters(
            lr in 1e-6f64..1.0, b1 in 0.01f64..0.99, b2 in 0.01f64..0.9999,
            params in proptest::collection::vec(-10.0f64..10.0, 1..20),
        ) {
            let mut p = params.clone();
            let mut s = AdamState::new(p.len(), lr).with_betas(b1, b2);
            adam_step(&mut p, &vec![0.0; params.len()], &mut s).unwrap();
            prop_assert_eq!(p, params);
        }
    }
}
