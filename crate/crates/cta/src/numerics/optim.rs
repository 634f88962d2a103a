//! First-order update rules with per-parameter moment state.
//!
//! Moments are keyed by parameter name so a store can be rebuilt or copied
//! without invalidating optimizer history held elsewhere.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{CtaError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum OptimizerKind {
    /// `buf = momentum·buf + g; p -= lr·buf`
    SgdMomentum { momentum: f64 },
    /// Bias-corrected Adam.
    Adam { beta1: f64, beta2: f64, epsilon: f64 },
}

impl OptimizerKind {
    pub fn sgd(momentum: f64) -> Self {
        OptimizerKind::SgdMomentum { momentum }
    }

    pub fn adam_default() -> Self {
        OptimizerKind::Adam { beta1: 0.9, beta2: 0.999, epsilon: 1e-8 }
    }
}

#[derive(Debug, Clone)]
struct Moments {
    first: Vec<f64>,
    second: Vec<f64>,
    steps: u64,
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub learning_rate: f64,
    moments: HashMap<String, Moments>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(CtaError::invalid("learning_rate", format!("must be finite and >= 0, got {learning_rate}")));
        }
        if let OptimizerKind::SgdMomentum { momentum } = kind {
            if !(0.0..1.0).contains(&momentum) {
                return Err(CtaError::invalid("momentum", format!("must be in [0,1), got {momentum}")));
            }
        }
        Ok(OptimizerState { kind, learning_rate, moments: HashMap::new() })
    }

    /// Applies one update to `values` in place using the gradient `grads`.
    ///
    /// Moment buffers are created lazily on first use per key.
    pub fn update(&mut self, key: &str, values: &mut [f64], grads: &[f64]) -> Result<()> {
        if values.len() != grads.len() {
            return Err(CtaError::shape(format!("optimizer update for '{key}'"), values.len(), grads.len()));
        }
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::SgdMomentum { momentum } => {
                if momentum == 0.0 {
                    for (p, &g) in values.iter_mut().zip(grads) {
                        *p -= lr * g;
                    }
                    return Ok(());
                }
                let entry = self.moments.entry(key.to_owned()).or_insert_with(|| Moments {
                    first: vec![0.0; grads.len()],
                    second: Vec::new(),
                    steps: 0,
                });
                if entry.first.len() != grads.len() {
                    return Err(CtaError::shape(format!("momentum buffer '{key}'"), entry.first.len(), grads.len()));
                }
                for ((p, &g), buf) in values.iter_mut().zip(grads).zip(entry.first.iter_mut()) {
                    *buf = momentum * *buf + g;
                    *p -= lr * *buf;
                }
            }
            OptimizerKind::Adam { beta1, beta2, epsilon } => {
                let entry = self.moments.entry(key.to_owned()).or_insert_with(|| Moments {
                    first: vec![0.0; grads.len()],
                    second: vec![0.0; grads.len()],
                    steps: 0,
                });
                if entry.first.len() != grads.len() {
                    return Err(CtaError::shape(format!("adam buffer '{key}'"), entry.first.len(), grads.len()));
                }
                entry.steps += 1;
                let t = entry.steps as i32;
                let bc1 = 1.0 - beta1.powi(t);
                let bc2 = 1.0 - beta2.powi(t);
                for (i, (p, &g)) in values.iter_mut().zip(grads).enumerate() {
                    entry.first[i] = beta1 * entry.first[i] + (1.0 - beta1) * g;
                    entry.second[i] = beta2 * entry.second[i] + (1.0 - beta2) * g * g;
                    let m_hat = entry.first[i] / bc1;
                    let v_hat = entry.second[i] / bc2;
                    *p -= lr * m_hat / (v_hat.sqrt() + epsilon);
                }
            }
        }
        Ok(())
    }

    /// Drops all accumulated moments, e.g. when the adapted model is reset.
    pub fn reset_moments(&mut self) {
        self.moments.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn plain_sgd_matches_hand_rule() {
        let mut opt = OptimizerState::new(OptimizerKind::sgd(0.0), 0.1).unwrap();
        let mut p = [1.0];
        opt.update("w", &mut p, &[0.5]).unwrap();
        assert!((p[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn momentum_accumulates_velocity() {
        let mut opt = OptimizerState::new(OptimizerKind::sgd(0.9), 0.1).unwrap();
        let mut p = [0.0];
        opt.update("w", &mut p, &[1.0]).unwrap(); // buf=1.0, p=-0.1
        opt.update("w", &mut p, &[1.0]).unwrap(); // buf=1.9, p=-0.29
        assert!((p[0] + 0.29).abs() < 1e-12);
    }

    #[test]
    fn adam_first_step_magnitude_is_learning_rate() {
        let mut opt = OptimizerState::new(OptimizerKind::adam_default(), 1e-3).unwrap();
        let mut p = [0.0];
        opt.update("w", &mut p, &[1.0]).unwrap();
        // Bias correction makes m̂ = v̂ = 1, so the step is lr/(1+ε).
        assert!((p[0].abs() - 1e-3).abs() < 1e-8);
    }

    #[test]
    fn zero_learning_rate_leaves_params_unchanged() {
        let mut opt = OptimizerState::new(OptimizerKind::adam_default(), 0.0).unwrap();
        let mut p = [3.25];
        opt.update("w", &mut p, &[12.0]).unwrap();
        assert_eq!(p[0], 3.25);
    }

    #[test]
    fn moments_are_isolated_per_key() {
        let mut opt = OptimizerState::new(OptimizerKind::sgd(0.9), 1.0).unwrap();
        let mut a = [0.0];
        let mut b = [0.0];
        opt.update("a", &mut a, &[1.0]).unwrap();
        opt.update("b", &mut b, &[1.0]).unwrap();
        assert_eq!(a[0], b[0]);
        opt.update("a", &mut a, &[0.0]).unwrap();
        // Key "a" carries velocity, key "b" was untouched by that step.
        assert!((a[0] + 1.9).abs() < 1e-12);
        assert!((b[0] + 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_hyperparams_are_rejected() {
        assert!(OptimizerState::new(OptimizerKind::sgd(1.5), 0.1).is_err());
        assert!(OptimizerState::new(OptimizerKind::sgd(0.0), f64::NAN).is_err());
    }
}
