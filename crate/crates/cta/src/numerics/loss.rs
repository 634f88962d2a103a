//! Prediction entropy and cross-entropy losses.
//!
//! All reductions over a batch are arithmetic means of the per-sample values,
//! and all logarithms are natural.

use crate::error::{CtaError, Result};
use crate::numerics::tensor::Tensor;

/// Mean Shannon entropy of a batch of probability rows, `-Σ p ln p` with
/// `0 ln 0 = 0`.
///
/// Rows must be nonnegative and sum to 1 within 1e-5.
pub fn shannon_entropy(probs: &Tensor) -> Result<f64> {
    let [n, classes] = *probs.shape() else {
        return Err(CtaError::shape("shannon_entropy", "rank 2 (N×n)", format!("{:?}", probs.shape())));
    };
    if n == 0 {
        return Err(CtaError::EmptyInput("shannon_entropy".into()));
    }
    let data = probs.data();
    let mut total = 0.0;
    for row in 0..n {
        let r = &data[row * classes..(row + 1) * classes];
        let sum: f64 = r.iter().sum();
        if (sum - 1.0).abs() > 1e-5 {
            return Err(CtaError::invalid(
                "shannon_entropy row",
                format!("row {row} sums to {sum}, expected 1 within 1e-5"),
            ));
        }
        if let Some(bad) = r.iter().find(|&&p| p < 0.0) {
            return Err(CtaError::invalid(
                "shannon_entropy row",
                format!("row {row} contains negative probability {bad}"),
            ));
        }
        total += r.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum::<f64>();
    }
    Ok(total / n as f64)
}

/// Row-wise log-softmax, stabilized by the row maximum.
pub fn log_softmax(logits: &Tensor) -> Result<Tensor> {
    let [n, classes] = *logits.shape() else {
        return Err(CtaError::shape("log_softmax", "rank 2 (N×n)", format!("{:?}", logits.shape())));
    };
    let data = logits.data();
    let mut out = vec![0.0; data.len()];
    for row in 0..n {
        let r = &data[row * classes..(row + 1) * classes];
        let max = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let log_z = r.iter().map(|z| (z - max).exp()).sum::<f64>().ln() + max;
        for (k, z) in r.iter().enumerate() {
            out[row * classes + k] = z - log_z;
        }
    }
    Tensor::from_vec(logits.shape(), out)
}

/// Row-wise softmax.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let mut lp = log_softmax(logits)?;
    for v in lp.data_mut() {
        *v = v.exp();
    }
    Ok(lp)
}

/// Backward of softmax: maps a gradient w.r.t. probabilities to one w.r.t.
/// logits, `dz_j = p_j (dp_j - Σ_i dp_i p_i)` per row.
pub fn softmax_backward(probs: &Tensor, dprobs: &Tensor) -> Result<Tensor> {
    if probs.shape() != dprobs.shape() {
        return Err(CtaError::shape(
            "softmax_backward",
            format!("{:?}", probs.shape()),
            format!("{:?}", dprobs.shape()),
        ));
    }
    let [n, classes] = *probs.shape() else {
        return Err(CtaError::shape("softmax_backward", "rank 2", format!("{:?}", probs.shape())));
    };
    let p = probs.data();
    let dp = dprobs.data();
    let mut dz = vec![0.0; p.len()];
    for row in 0..n {
        let base = row * classes;
        let dot: f64 = (0..classes).map(|k| dp[base + k] * p[base + k]).sum();
        for k in 0..classes {
            dz[base + k] = p[base + k] * (dp[base + k] - dot);
        }
    }
    Tensor::from_vec(probs.shape(), dz)
}

/// Soft cross-entropy `H(t, p) = -Σ t_i ln p_i`, averaged over rows.
pub fn soft_cross_entropy(target: &Tensor, probs: &Tensor) -> Result<f64> {
    if target.shape() != probs.shape() {
        return Err(CtaError::shape(
            "soft_cross_entropy",
            format!("{:?}", target.shape()),
            format!("{:?}", probs.shape()),
        ));
    }
    let [n, classes] = *probs.shape() else {
        return Err(CtaError::shape("soft_cross_entropy", "rank 2", format!("{:?}", probs.shape())));
    };
    let t = target.data();
    let p = probs.data();
    let mut total = 0.0;
    for k in 0..n * classes {
        if t[k] > 0.0 {
            total -= t[k] * p[k].ln();
        }
    }
    Ok(total / n as f64)
}

/// Gradient of [`soft_cross_entropy`] w.r.t. the probabilities.
pub fn soft_cross_entropy_backward(target: &Tensor, probs: &Tensor) -> Result<Tensor> {
    let [n, classes] = *probs.shape() else {
        return Err(CtaError::shape("soft_cross_entropy", "rank 2", format!("{:?}", probs.shape())));
    };
    let t = target.data();
    let p = probs.data();
    let mut dp = vec![0.0; p.len()];
    for k in 0..n * classes {
        if t[k] != 0.0 {
            dp[k] = -t[k] / p[k] / n as f64;
        }
    }
    Tensor::from_vec(probs.shape(), dp)
}

/// Mean prediction entropy of `softmax(logits)` with its gradient w.r.t. the
/// logits. This is the TENT objective.
///
/// Per row, `dH/dz_j = -p_j (ln p_j + H_row)`.
pub fn entropy_of_softmax(logits: &Tensor) -> Result<(f64, Tensor, Tensor)> {
    let probs = softmax(logits)?;
    let [n, classes] = *probs.shape() else { unreachable!() };
    let p = probs.data();
    let mut loss = 0.0;
    let mut dz = vec![0.0; p.len()];
    for row in 0..n {
        let base = row * classes;
        let h: f64 = (0..classes)
            .map(|k| p[base + k])
            .filter(|&v| v > 0.0)
            .map(|v| -v * v.ln())
            .sum();
        loss += h;
        for k in 0..classes {
            let v = p[base + k];
            if v > 0.0 {
                dz[base + k] = -v * (v.ln() + h) / n as f64;
            }
        }
    }
    Ok((loss / n as f64, Tensor::from_vec(logits.shape(), dz)?, probs))
}

/// Mean soft cross-entropy between a fixed target distribution and
/// `softmax(logits)`, with its gradient w.r.t. the logits: `(p - q) / N`.
/// This is the student objective used by the teacher-student adapter, and
/// with one-hot targets the source-training loss.
pub fn cross_entropy_of_softmax(target: &Tensor, logits: &Tensor) -> Result<(f64, Tensor, Tensor)> {
    if target.shape() != logits.shape() {
        return Err(CtaError::shape(
            "cross_entropy_of_softmax",
            format!("{:?}", target.shape()),
            format!("{:?}", logits.shape()),
        ));
    }
    let logp = log_softmax(logits)?;
    let [n, classes] = *logits.shape() else {
        return Err(CtaError::shape("cross_entropy_of_softmax", "rank 2", format!("{:?}", logits.shape())));
    };
    let t = target.data();
    let lp = logp.data();
    let mut loss = 0.0;
    let mut dz = vec![0.0; lp.len()];
    for row in 0..n {
        let base = row * classes;
        for k in 0..classes {
            if t[base + k] > 0.0 {
                loss -= t[base + k] * lp[base + k];
            }
            dz[base + k] = (lp[base + k].exp() - t[base + k]) / n as f64;
        }
    }
    let probs = {
        let mut p = logp;
        for v in p.data_mut() {
            *v = v.exp();
        }
        p
    };
    Ok((loss / n as f64, Tensor::from_vec(logits.shape(), dz)?, probs))
}

/// One-hot rows for integer labels.
pub fn one_hot(labels: &[usize], classes: usize) -> Result<Tensor> {
    let mut data = vec![0.0; labels.len() * classes];
    for (row, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(CtaError::invalid("label", format!("{l} out of range for {classes} classes")));
        }
        data[row * classes + l] = 1.0;
    }
    Tensor::from_vec(&[labels.len(), classes], data)
}
