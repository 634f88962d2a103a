//! Central-difference verification of analytic gradients.

use crate::error::{CtaError, Result};
use crate::numerics::tensor::Tensor;
use crate::rng::{gen_index, rng_from};

/// Coordinates sampled per tensor when a parameter has more scalars than this.
const MAX_COORDS_PER_TENSOR: usize = 64;

/// Below this magnitude on both sides a coordinate counts as matching.
///
/// Central differences at h=1e-5 on an O(1) loss carry ~1e-11 of roundoff
/// noise, so a structurally zero gradient (e.g. a conv bias followed by
/// batch-stat normalization, which cancels uniform channel shifts exactly)
/// would otherwise read as a large relative error against the 1e-8 floor.
const NEGLIGIBLE_GRAD: f64 = 1e-9;

#[derive(Debug, Clone, Copy)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub coords_checked: usize,
}

/// Compares analytic gradients against `(f(x+h) − f(x−h)) / 2h`.
///
/// `eval` is called with the current parameter values and a flag saying
/// whether gradients are needed; perturbed evaluations only ask for the loss.
/// Relative error per coordinate is `|a − n| / max(1e-8, |a| + |n|)`;
/// coordinates where both sides are below [`NEGLIGIBLE_GRAD`] count as
/// matching. Tensors larger than 64 scalars are probed on a seeded subset.
pub fn gradient_check<F>(params: &[Tensor], h: f64, seed: u64, mut eval: F) -> Result<GradCheckReport>
where
    F: FnMut(&[Tensor], bool) -> Result<(f64, Option<Vec<Tensor>>)>,
{
    if !(h > 0.0 && h.is_finite()) {
        return Err(CtaError::invalid("h", format!("step must be finite and > 0, got {h}")));
    }
    let mut work: Vec<Tensor> = params.to_vec();
    let (base_loss, grads) = eval(&work, true)?;
    if !base_loss.is_finite() {
        return Err(CtaError::NonFinite("gradient_check loss".into()));
    }
    let grads = grads.ok_or_else(|| CtaError::MissingGradient("gradient_check eval".into()))?;
    if grads.len() != params.len() {
        return Err(CtaError::shape("gradient list", params.len(), grads.len()));
    }
    for (p, g) in params.iter().zip(&grads) {
        if p.shape() != g.shape() {
            return Err(CtaError::shape("gradient", format!("{:?}", p.shape()), format!("{:?}", g.shape())));
        }
    }

    let mut rng = rng_from(seed, &[0x6772_6164]);
    let mut max_rel: f64 = 0.0;
    let mut checked = 0usize;
    for pi in 0..params.len() {
        let len = params[pi].len();
        let coords: Vec<usize> = if len <= MAX_COORDS_PER_TENSOR {
            (0..len).collect()
        } else {
            // Partial Fisher-Yates: the first 64 entries are a uniform
            // draw without replacement.
            let mut idx: Vec<usize> = (0..len).collect();
            for i in 0..MAX_COORDS_PER_TENSOR {
                let j = i + gen_index(&mut rng, len - i);
                idx.swap(i, j);
            }
            idx.truncate(MAX_COORDS_PER_TENSOR);
            idx
        };
        for coord in coords {
            let saved = work[pi].data()[coord];
            work[pi].data_mut()[coord] = saved + h;
            let (loss_plus, _) = eval(&work, false)?;
            work[pi].data_mut()[coord] = saved - h;
            let (loss_minus, _) = eval(&work, false)?;
            work[pi].data_mut()[coord] = saved;
            if !loss_plus.is_finite() || !loss_minus.is_finite() {
                return Err(CtaError::NonFinite("gradient_check loss".into()));
            }
            let numeric = (loss_plus - loss_minus) / (2.0 * h);
            let analytic = grads[pi].data()[coord];
            if analytic.abs() < NEGLIGIBLE_GRAD && numeric.abs() < NEGLIGIBLE_GRAD {
                checked += 1;
                continue;
            }
            let rel = (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8);
            if rel > max_rel {
                max_rel = rel;
            }
            checked += 1;
        }
    }
    Ok(GradCheckReport { max_rel_error: max_rel, coords_checked: checked })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::batchnorm::{batch_stats, batchnorm_apply, bn_backward_batch, BatchNormState, StatMode};
    use crate::numerics::loss::entropy_of_softmax;

    #[test]
    fn linear_loss_is_exact() {
        let w = Tensor::from_vec(&[3], vec![0.5, -1.25, 2.0]).unwrap();
        let coeff = [3.0, 7.0, -2.0];
        let report = gradient_check(&[w], 1e-5, 1, |p, _| {
            let loss: f64 = p[0].data().iter().zip(&coeff).map(|(x, c)| x * c).sum();
            Ok((loss, Some(vec![Tensor::from_vec(&[3], coeff.to_vec()).unwrap()])))
        })
        .unwrap();
        assert!(report.max_rel_error <= 1e-9, "rel error {}", report.max_rel_error);
        assert_eq!(report.coords_checked, 3);
    }

    #[test]
    fn constant_loss_has_zero_gradient() {
        let w = Tensor::filled(&[4], 1.0);
        let report = gradient_check(&[w], 1e-5, 1, |p, _| {
            Ok((42.0, Some(vec![Tensor::zeros(p[0].shape())])))
        })
        .unwrap();
        assert_eq!(report.max_rel_error, 0.0);
    }

    #[test]
    fn quadratic_loss_matches() {
        let w = Tensor::from_vec(&[2], vec![1.5, -0.75]).unwrap();
        let report = gradient_check(&[w], 1e-5, 9, |p, _| {
            let loss: f64 = p[0].data().iter().map(|x| x * x).sum();
            let grad: Vec<f64> = p[0].data().iter().map(|x| 2.0 * x).collect();
            Ok((loss, Some(vec![Tensor::from_vec(&[2], grad).unwrap()])))
        })
        .unwrap();
        assert!(report.max_rel_error <= 1e-6);
    }

    #[test]
    fn large_tensors_are_subsampled() {
        let w = Tensor::zeros(&[1000]);
        let report = gradient_check(&[w], 1e-5, 3, |p, _| {
            let loss: f64 = p[0].data().iter().sum();
            Ok((loss, Some(vec![Tensor::filled(&[1000], 1.0)])))
        })
        .unwrap();
        assert_eq!(report.coords_checked, 64);
    }

    #[test]
    fn non_finite_loss_is_an_error() {
        let w = Tensor::zeros(&[1]);
        let err = gradient_check(&[w], 1e-5, 1, |_, _| {
            Ok((f64::NAN, Some(vec![Tensor::zeros(&[1])])))
        });
        assert!(err.is_err());
    }

    #[test]
    fn entropy_of_softmax_through_bn_affine() {
        // Entropy objective through a normalization layer, checked w.r.t.
        // the per-channel scale and shift.
        let x = Tensor::from_vec(
            &[4, 3],
            vec![0.2, -1.0, 0.5, 1.3, 0.4, -0.7, -0.9, 2.0, 0.1, 0.6, -0.3, 1.1],
        )
        .unwrap();
        let gamma = Tensor::from_vec(&[3], vec![1.2, 0.8, 1.0]).unwrap();
        let beta = Tensor::from_vec(&[3], vec![0.1, -0.2, 0.0]).unwrap();
        let report = gradient_check(&[gamma, beta], 1e-5, 7, |p, _| {
            let mut st = BatchNormState::new(3, 1e-5, 0.9).unwrap();
            st.gamma = p[0].data().to_vec();
            st.beta = p[1].data().to_vec();
            let (y, _) = batchnorm_apply(&x, &st, StatMode::TestBatch)?;
            let (loss, dy, _) = entropy_of_softmax(&y)?;
            let (mean, var) = batch_stats(&x)?;
            let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + st.epsilon).sqrt()).collect();
            let (_, dgamma, dbeta) = bn_backward_batch(&x, &mean, &inv_std, &st.gamma, &dy)?;
            Ok((
                loss,
                Some(vec![
                    Tensor::from_vec(&[3], dgamma).unwrap(),
                    Tensor::from_vec(&[3], dbeta).unwrap(),
                ]),
            ))
        })
        .unwrap();
        assert!(report.max_rel_error <= 1e-4, "rel error {}", report.max_rel_error);
    }
}
