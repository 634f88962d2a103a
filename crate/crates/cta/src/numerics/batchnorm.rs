//! Batch normalization with switchable statistics sources.
//!
//! The transform is `y = (x - mean) / sqrt(var + eps) * gamma + beta` applied
//! per channel. Which (mean, var) pair feeds the transform is controlled by
//! [`StatMode`]:
//!
//! * `TrainUpdate`  - batch statistics; running estimates advance by EMA.
//! * `FrozenSource` - the stored running estimates; nothing is written.
//! * `TestBatch`    - batch statistics of the incoming batch; nothing is
//!   written. This is the statistics source every test-time adapter uses.
//!
//! Variance is population variance (divide by the element count), both for
//! normalization and for the running estimate.

use crate::error::{CtaError, Result};
use crate::numerics::tensor::Tensor;

/// Statistics source for one forward pass.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StatMode {
    TrainUpdate,
    FrozenSource,
    TestBatch,
}

/// Per-channel state of one batch normalization layer.
#[derive(Debug, Clone)]
pub struct BatchNormState {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub epsilon: f64,
    /// The EMA smoothing factor applied to the *old* running value.
    pub stat_momentum: f64,
}

impl BatchNormState {
    /// Fresh state: gamma 1, beta 0, mean 0, var 1.
    pub fn new(channels: usize, epsilon: f64, stat_momentum: f64) -> Result<Self> {
        if epsilon <= 0.0 || !epsilon.is_finite() {
            return Err(CtaError::invalid("epsilon", format!("must be positive, got {epsilon}")));
        }
        if !(0.0..=1.0).contains(&stat_momentum) {
            return Err(CtaError::invalid(
                "stat_momentum",
                format!("must lie in [0, 1], got {stat_momentum}"),
            ));
        }
        Ok(BatchNormState {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            running_mean: vec![0.0; channels],
            running_var: vec![1.0; channels],
            epsilon,
            stat_momentum,
        })
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }
}

/// Splits an N×C or N×C×H×W shape into (batch, channels, spatial).
pub(crate) fn bn_dims(shape: &[usize]) -> Result<(usize, usize, usize)> {
    match shape {
        [n, c] => Ok((*n, *c, 1)),
        [n, c, h, w] => Ok((*n, *c, h * w)),
        other => Err(CtaError::shape(
            "batchnorm input",
            "rank 2 (N×C) or rank 4 (N×C×H×W)",
            format!("{other:?}"),
        )),
    }
}

/// Per-channel batch mean and population variance.
pub fn batch_stats(x: &Tensor) -> Result<(Vec<f64>, Vec<f64>)> {
    let (n, c, s) = bn_dims(x.shape())?;
    if n == 0 {
        return Err(CtaError::EmptyInput("batchnorm batch".into()));
    }
    let count = (n * s) as f64;
    let mut mean = vec![0.0; c];
    let mut var = vec![0.0; c];
    let data = x.data();
    for i in 0..n {
        for ch in 0..c {
            let base = (i * c + ch) * s;
            let mut acc = 0.0;
            for v in &data[base..base + s] {
                acc += v;
            }
            mean[ch] += acc;
        }
    }
    for m in &mut mean {
        *m /= count;
    }
    for i in 0..n {
        for ch in 0..c {
            let base = (i * c + ch) * s;
            let m = mean[ch];
            let mut acc = 0.0;
            for v in &data[base..base + s] {
                let d = v - m;
                acc += d * d;
            }
            var[ch] += acc;
        }
    }
    for v in &mut var {
        *v /= count;
    }
    Ok((mean, var))
}

/// Normalizes `x` with the given per-channel statistics.
pub fn bn_normalize(
    x: &Tensor,
    mean: &[f64],
    var: &[f64],
    gamma: &[f64],
    beta: &[f64],
    epsilon: f64,
) -> Result<Tensor> {
    let (n, c, s) = bn_dims(x.shape())?;
    if mean.len() != c || var.len() != c || gamma.len() != c || beta.len() != c {
        return Err(CtaError::shape(
            "batchnorm channels",
            c,
            format!(
                "mean {} / var {} / gamma {} / beta {}",
                mean.len(),
                var.len(),
                gamma.len(),
                beta.len()
            ),
        ));
    }
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + epsilon).sqrt()).collect();
    let mut y = vec![0.0; x.len()];
    let data = x.data();
    for i in 0..n {
        for ch in 0..c {
            let base = (i * c + ch) * s;
            let (m, is, g, b) = (mean[ch], inv_std[ch], gamma[ch], beta[ch]);
            for k in 0..s {
                y[base + k] = (data[base + k] - m) * is * g + b;
            }
        }
    }
    Tensor::from_vec(x.shape(), y)
}

/// One batch normalization forward pass.
///
/// Returns the output and the (possibly advanced) state. Only `TrainUpdate`
/// touches the running statistics; the other modes return the state verbatim.
pub fn batchnorm_apply(
    x: &Tensor,
    state: &BatchNormState,
    mode: StatMode,
) -> Result<(Tensor, BatchNormState)> {
    let (n, c, _) = bn_dims(x.shape())?;
    if n == 0 {
        return Err(CtaError::EmptyInput("batchnorm batch".into()));
    }
    if c != state.channels() {
        return Err(CtaError::shape("batchnorm channels", state.channels(), c));
    }
    match mode {
        StatMode::FrozenSource => {
            let y = bn_normalize(
                x,
                &state.running_mean,
                &state.running_var,
                &state.gamma,
                &state.beta,
                state.epsilon,
            )?;
            Ok((y, state.clone()))
        }
        StatMode::TestBatch => {
            let (mean, var) = batch_stats(x)?;
            let y = bn_normalize(x, &mean, &var, &state.gamma, &state.beta, state.epsilon)?;
            Ok((y, state.clone()))
        }
        StatMode::TrainUpdate => {
            let (mean, var) = batch_stats(x)?;
            let y = bn_normalize(x, &mean, &var, &state.gamma, &state.beta, state.epsilon)?;
            let mut next = state.clone();
            next.running_mean = ema_slice(&state.running_mean, &mean, state.stat_momentum)?;
            next.running_var = ema_slice(&state.running_var, &var, state.stat_momentum)?;
            Ok((y, next))
        }
    }
}

/// `alpha * old + (1 - alpha) * new`, elementwise.
pub fn ema_update(old: &Tensor, new: &Tensor, alpha: f64) -> Result<Tensor> {
    if old.shape() != new.shape() {
        return Err(CtaError::shape(
            "ema_update",
            format!("{:?}", old.shape()),
            format!("{:?}", new.shape()),
        ));
    }
    let data = ema_slice(old.data(), new.data(), alpha)?;
    Tensor::from_vec(old.shape(), data)
}

pub fn ema_slice(old: &[f64], new: &[f64], alpha: f64) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(CtaError::invalid("alpha", format!("must lie in [0, 1], got {alpha}")));
    }
    debug_assert_eq!(old.len(), new.len());
    Ok(old
        .iter()
        .zip(new)
        .map(|(o, n)| alpha * o + (1.0 - alpha) * n)
        .collect())
}

/// Gradients of a batch-statistics forward pass.
///
/// `mean` and `inv_std` must be the values used in the forward pass. The
/// input gradient accounts for the dependence of the batch statistics on
/// every element.
pub fn bn_backward_batch(
    x: &Tensor,
    mean: &[f64],
    inv_std: &[f64],
    gamma: &[f64],
    dy: &Tensor,
) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
    let (n, c, s) = bn_dims(x.shape())?;
    if dy.shape() != x.shape() {
        return Err(CtaError::shape(
            "bn_backward_batch grad",
            format!("{:?}", x.shape()),
            format!("{:?}", dy.shape()),
        ));
    }
    let count = (n * s) as f64;
    let xd = x.data();
    let gd = dy.data();
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    for i in 0..n {
        for ch in 0..c {
            let base = (i * c + ch) * s;
            let (m, is) = (mean[ch], inv_std[ch]);
            let mut acc_g = 0.0;
            let mut acc_b = 0.0;
            for k in 0..s {
                let xhat = (xd[base + k] - m) * is;
                acc_g += gd[base + k] * xhat;
                acc_b += gd[base + k];
            }
            dgamma[ch] += acc_g;
            dbeta[ch] += acc_b;
        }
    }
    let mut dx = vec![0.0; x.len()];
    for i in 0..n {
        for ch in 0..c {
            let base = (i * c + ch) * s;
            let (m, is, g) = (mean[ch], inv_std[ch], gamma[ch]);
            let mean_dy = dbeta[ch] / count;
            let mean_dy_xhat = dgamma[ch] / count;
            for k in 0..s {
                let xhat = (xd[base + k] - m) * is;
                dx[base + k] = g * is * (gd[base + k] - mean_dy - xhat * mean_dy_xhat);
            }
        }
    }
    Ok((Tensor::from_vec(x.shape(), dx)?, dgamma, dbeta))
}

/// Gradients of a frozen-statistics forward pass (statistics are constants).
pub fn bn_backward_frozen(
    x: &Tensor,
    mean: &[f64],
    inv_std: &[f64],
    gamma: &[f64],
    dy: &Tensor,
) -> Result<(Tensor, Vec<f64>, Vec<f64>)> {
    let (n, c, s) = bn_dims(x.shape())?;
    let xd = x.data();
    let gd = dy.data();
    let mut dgamma = vec![0.0; c];
    let mut dbeta = vec![0.0; c];
    let mut dx = vec![0.0; x.len()];
    for i in 0..n {
        for ch in 0..c {
            let base = (i * c + ch) * s;
            let (m, is, g) = (mean[ch], inv_std[ch], gamma[ch]);
            for k in 0..s {
                let xhat = (xd[base + k] - m) * is;
                dgamma[ch] += gd[base + k] * xhat;
                dbeta[ch] += gd[base + k];
                dx[base + k] = gd[base + k] * g * is;
            }
        }
    }
    Ok((Tensor::from_vec(x.shape(), dx)?, dgamma, dbeta))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    #[test]
    fn test_batch_mode_matches_hand_computed_values() {
        // x = [1, 2, 3] as N=3, C=1: mean 2, population variance 2/3.
        let x = Tensor::from_vec(&[3, 1], vec![1.0, 2.0, 3.0]).unwrap();
        let mut state = BatchNormState::new(1, 1e-12, 0.9).unwrap();
        state.epsilon = 1e-12; // effectively zero against var 2/3
        let (y, after) = batchnorm_apply(&x, &state, StatMode::TestBatch).unwrap();
        let expect = [-1.224745, 0.0, 1.224745];
        for (got, want) in y.data().iter().zip(expect) {
            assert!(close(*got, want, 1e-5), "got {got}, want {want}");
        }
        // TestBatch never touches running statistics.
        assert_eq!(after.running_mean, state.running_mean);
        assert_eq!(after.running_var, state.running_var);
    }

    #[test]
    fn identity_on_standardized_input() {
        let x = Tensor::from_vec(&[4, 1], vec![-1.2, -0.4, 0.4, 1.2]).unwrap();
        let (mean, var) = batch_stats(&x).unwrap();
        // standardize exactly, then feed through
        let std = var[0].sqrt();
        let xs: Vec<f64> = x.data().iter().map(|v| (v - mean[0]) / std).collect();
        let xs = Tensor::from_vec(&[4, 1], xs).unwrap();
        let mut state = BatchNormState::new(1, 1e-12, 0.9).unwrap();
        state.epsilon = 1e-12;
        let (y, _) = batchnorm_apply(&xs, &state, StatMode::TestBatch).unwrap();
        for (a, b) in y.data().iter().zip(xs.data()) {
            assert!(close(*a, *b, 1e-5));
        }
    }

    #[test]
    fn gamma_zero_yields_beta_everywhere() {
        let x = Tensor::from_vec(&[2, 2], vec![5.0, -3.0, 0.5, 9.0]).unwrap();
        let mut state = BatchNormState::new(2, 1e-5, 0.9).unwrap();
        state.gamma = vec![0.0, 0.0];
        state.beta = vec![0.7, -1.3];
        for mode in [StatMode::TestBatch, StatMode::FrozenSource, StatMode::TrainUpdate] {
            let (y, _) = batchnorm_apply(&x, &state, mode).unwrap();
            assert_eq!(y.data(), &[0.7, -1.3, 0.7, -1.3]);
        }
    }

    #[test]
    fn train_update_advances_running_stats_by_ema() {
        let x = Tensor::from_vec(&[2, 1], vec![0.0, 4.0]).unwrap();
        let state = BatchNormState::new(1, 1e-5, 0.9).unwrap();
        let (_, after) = batchnorm_apply(&x, &state, StatMode::TrainUpdate).unwrap();
        // batch mean 2, batch var 4; running starts at (0, 1)
        assert!(close(after.running_mean[0], 0.9 * 0.0 + 0.1 * 2.0, 1e-12));
        assert!(close(after.running_var[0], 0.9 * 1.0 + 0.1 * 4.0, 1e-12));
    }

    #[test]
    fn frozen_and_test_modes_leave_stats_bit_identical() {
        let x = Tensor::from_vec(&[3, 2], vec![1.0, -2.0, 0.3, 0.9, -4.0, 2.2]).unwrap();
        let mut state = BatchNormState::new(2, 1e-5, 0.9).unwrap();
        state.running_mean = vec![0.25, -0.75];
        state.running_var = vec![1.5, 0.3];
        for mode in [StatMode::FrozenSource, StatMode::TestBatch] {
            let (_, after) = batchnorm_apply(&x, &state, mode).unwrap();
            assert!(after
                .running_mean
                .iter()
                .zip(&state.running_mean)
                .all(|(a, b)| a.to_bits() == b.to_bits()));
            assert!(after
                .running_var
                .iter()
                .zip(&state.running_var)
                .all(|(a, b)| a.to_bits() == b.to_bits()));
        }
    }

    #[test]
    fn channel_mismatch_and_empty_batch_are_errors() {
        let state = BatchNormState::new(3, 1e-5, 0.9).unwrap();
        let x = Tensor::zeros(&[2, 2]);
        assert!(batchnorm_apply(&x, &state, StatMode::TestBatch).is_err());
        let empty = Tensor::zeros(&[0, 3]);
        assert!(batchnorm_apply(&empty, &state, StatMode::TestBatch).is_err());
    }

    #[test]
    fn ema_examples() {
        let old = Tensor::from_vec(&[1], vec![1.0]).unwrap();
        let new = Tensor::from_vec(&[1], vec![2.0]).unwrap();
        assert_eq!(ema_update(&old, &new, 1.0).unwrap().data(), &[1.0]);
        assert_eq!(ema_update(&old, &new, 0.0).unwrap().data(), &[2.0]);
        let mid = ema_update(&old, &new, 0.9).unwrap();
        assert!(close(mid.data()[0], 1.1, 1e-15));
        assert!(ema_update(&old, &new, 1.5).is_err());
        assert!(ema_update(&old, &new, -0.1).is_err());
    }

    #[test]
    fn spatial_input_uses_per_channel_counts() {
        // N=1, C=1, 2x2 spatial: stats over all four elements.
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let (mean, var) = batch_stats(&x).unwrap();
        assert!(close(mean[0], 2.5, 1e-12));
        assert!(close(var[0], 1.25, 1e-12));
    }
}
