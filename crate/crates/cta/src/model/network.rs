//! Network assembly, seeded initialization, forward/backward execution.
//!
//! A [`Network`] owns only the architecture. Parameters travel separately in
//! a [`ParamStore`] so adapters can run one architecture against several
//! stores (student, teacher, source snapshot) without copying the spec.

use crate::error::{CtaError, Result};
use crate::model::params::{GradStore, ParamRole, ParamStore};
use crate::model::spec::{LayerSpec, ModelSpec};
use crate::numerics::batchnorm::{batch_stats, bn_backward_batch, bn_backward_frozen, bn_normalize, ema_slice};
use crate::numerics::layers::{
    avgpool_backward, avgpool_forward, conv2d_backward, conv2d_forward, dense_backward,
    dense_forward, relu_backward, relu_forward,
};
use crate::numerics::loss::softmax;
use crate::numerics::tensor::Tensor;
use crate::numerics::StatMode;
use crate::rng::{normal, rng_from};

#[derive(Debug, Clone)]
pub struct Network {
    spec: ModelSpec,
}

/// Running-statistics advance produced by one TrainUpdate forward pass.
/// Values are the new running estimates, not the raw batch statistics.
#[derive(Debug, Clone)]
pub struct StatUpdate {
    pub layer: usize,
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

enum LayerCache {
    Conv { x: Tensor },
    Dense { x: Tensor },
    BatchNorm { x: Tensor, mean: Vec<f64>, inv_std: Vec<f64>, frozen: bool },
    Relu { x: Tensor },
    AvgPool { shape: Vec<usize>, window: usize },
    Flatten { shape: Vec<usize> },
}

/// Everything backward needs, plus the stat advances to commit after an
/// optimizer step.
pub struct ForwardPass {
    pub logits: Tensor,
    caches: Vec<LayerCache>,
    pub stat_updates: Vec<StatUpdate>,
}

/// Builds a validated network and a freshly initialized parameter store.
pub fn build_model(spec: ModelSpec, seed: u64) -> Result<(Network, ParamStore)> {
    let net = Network::new(spec)?;
    let params = net.init_params(seed)?;
    Ok((net, params))
}

impl Network {
    pub fn new(spec: ModelSpec) -> Result<Self> {
        spec.trace_shapes()?;
        Ok(Network { spec })
    }

    pub fn spec(&self) -> &ModelSpec {
        &self.spec
    }

    /// Expected parameter inventory in store order: (name, role, shape).
    pub fn param_inventory(&self) -> Vec<(String, ParamRole, Vec<usize>)> {
        let mut out = Vec::new();
        for (i, layer) in self.spec.layers.iter().enumerate() {
            match layer {
                LayerSpec::Conv2d { in_channels, out_channels, kernel } => {
                    out.push((format!("layer{i}.weight"), ParamRole::Weight, vec![*out_channels, *in_channels, *kernel, *kernel]));
                    out.push((format!("layer{i}.bias"), ParamRole::Bias, vec![*out_channels]));
                }
                LayerSpec::Dense { inputs, outputs } => {
                    out.push((format!("layer{i}.weight"), ParamRole::Weight, vec![*outputs, *inputs]));
                    out.push((format!("layer{i}.bias"), ParamRole::Bias, vec![*outputs]));
                }
                LayerSpec::BatchNorm { channels, .. } => {
                    out.push((format!("layer{i}.gamma"), ParamRole::BnAffine, vec![*channels]));
                    out.push((format!("layer{i}.beta"), ParamRole::BnAffine, vec![*channels]));
                    out.push((format!("layer{i}.running_mean"), ParamRole::BnStat, vec![*channels]));
                    out.push((format!("layer{i}.running_var"), ParamRole::BnStat, vec![*channels]));
                }
                LayerSpec::Relu | LayerSpec::AvgPool { .. } | LayerSpec::Flatten => {}
            }
        }
        out
    }

    /// He-initialized weights from the seeded generator; biases zero; BN
    /// scale 1, shift 0, running mean 0, running variance 1.
    pub fn init_params(&self, seed: u64) -> Result<ParamStore> {
        let mut rng = rng_from(seed, &[0x696e_6974]);
        let mut store = ParamStore::new();
        for (i, layer) in self.spec.layers.iter().enumerate() {
            match layer {
                LayerSpec::Conv2d { in_channels, out_channels, kernel } => {
                    let fan_in = in_channels * kernel * kernel;
                    let std = (2.0 / fan_in as f64).sqrt();
                    let shape = [*out_channels, *in_channels, *kernel, *kernel];
                    let data: Vec<f64> = (0..shape.iter().product::<usize>())
                        .map(|_| normal(&mut rng) * std)
                        .collect();
                    store.insert(format!("layer{i}.weight"), Tensor::from_vec(&shape, data)?, ParamRole::Weight)?;
                    store.insert(format!("layer{i}.bias"), Tensor::zeros(&[*out_channels]), ParamRole::Bias)?;
                }
                LayerSpec::Dense { inputs, outputs } => {
                    let std = (2.0 / *inputs as f64).sqrt();
                    let data: Vec<f64> = (0..inputs * outputs).map(|_| normal(&mut rng) * std).collect();
                    store.insert(format!("layer{i}.weight"), Tensor::from_vec(&[*outputs, *inputs], data)?, ParamRole::Weight)?;
                    store.insert(format!("layer{i}.bias"), Tensor::zeros(&[*outputs]), ParamRole::Bias)?;
                }
                LayerSpec::BatchNorm { channels, .. } => {
                    store.insert(format!("layer{i}.gamma"), Tensor::filled(&[*channels], 1.0), ParamRole::BnAffine)?;
                    store.insert(format!("layer{i}.beta"), Tensor::zeros(&[*channels]), ParamRole::BnAffine)?;
                    store.insert(format!("layer{i}.running_mean"), Tensor::zeros(&[*channels]), ParamRole::BnStat)?;
                    store.insert(format!("layer{i}.running_var"), Tensor::filled(&[*channels], 1.0), ParamRole::BnStat)?;
                }
                LayerSpec::Relu | LayerSpec::AvgPool { .. } | LayerSpec::Flatten => {}
            }
        }
        Ok(store)
    }

    fn check_input(&self, x: &Tensor) -> Result<usize> {
        let [c, h, w] = self.spec.input_shape;
        match *x.shape() {
            [n, xc, xh, xw] if xc == c && xh == h && xw == w => Ok(n),
            _ => Err(CtaError::shape(
                "network input",
                format!("[N, {c}, {h}, {w}]"),
                format!("{:?}", x.shape()),
            )),
        }
    }

    /// Runs the network, returning logits plus the caches backward needs.
    ///
    /// No parameter or running statistic is mutated; TrainUpdate mode
    /// reports its running-stat advances in `stat_updates` for an explicit
    /// [`Network::commit_stats`] call.
    pub fn forward(&self, params: &ParamStore, x: &Tensor, mode: StatMode) -> Result<ForwardPass> {
        self.check_input(x)?;
        let mut cur = x.clone();
        let mut caches = Vec::with_capacity(self.spec.layers.len());
        let mut stat_updates = Vec::new();
        for (i, layer) in self.spec.layers.iter().enumerate() {
            match layer {
                LayerSpec::Conv2d { .. } => {
                    let w = params.get(&format!("layer{i}.weight"))?;
                    let b = params.get(&format!("layer{i}.bias"))?;
                    let y = conv2d_forward(&cur, w, b)?;
                    caches.push(LayerCache::Conv { x: std::mem::replace(&mut cur, y) });
                }
                LayerSpec::Dense { .. } => {
                    let w = params.get(&format!("layer{i}.weight"))?;
                    let b = params.get(&format!("layer{i}.bias"))?;
                    let y = dense_forward(&cur, w, b)?;
                    caches.push(LayerCache::Dense { x: std::mem::replace(&mut cur, y) });
                }
                LayerSpec::BatchNorm { epsilon, stat_momentum, .. } => {
                    let gamma = params.get(&format!("layer{i}.gamma"))?.data();
                    let beta = params.get(&format!("layer{i}.beta"))?.data();
                    let (mean, var, frozen) = match mode {
                        StatMode::FrozenSource => {
                            let m = params.get(&format!("layer{i}.running_mean"))?.data().to_vec();
                            let v = params.get(&format!("layer{i}.running_var"))?.data().to_vec();
                            (m, v, true)
                        }
                        StatMode::TestBatch | StatMode::TrainUpdate => {
                            let (m, v) = batch_stats(&cur)?;
                            if mode == StatMode::TrainUpdate {
                                let rm = params.get(&format!("layer{i}.running_mean"))?.data();
                                let rv = params.get(&format!("layer{i}.running_var"))?.data();
                                stat_updates.push(StatUpdate {
                                    layer: i,
                                    mean: ema_slice(rm, &m, *stat_momentum)?,
                                    var: ema_slice(rv, &v, *stat_momentum)?,
                                });
                            }
                            (m, v, false)
                        }
                    };
                    let y = bn_normalize(&cur, &mean, &var, gamma, beta, *epsilon)?;
                    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + epsilon).sqrt()).collect();
                    caches.push(LayerCache::BatchNorm {
                        x: std::mem::replace(&mut cur, y),
                        mean,
                        inv_std,
                        frozen,
                    });
                }
                LayerSpec::Relu => {
                    let y = relu_forward(&cur);
                    caches.push(LayerCache::Relu { x: std::mem::replace(&mut cur, y) });
                }
                LayerSpec::AvgPool { window } => {
                    let y = avgpool_forward(&cur, *window)?;
                    let shape = cur.shape().to_vec();
                    caches.push(LayerCache::AvgPool { shape, window: *window });
                    cur = y;
                }
                LayerSpec::Flatten => {
                    let shape = cur.shape().to_vec();
                    let n = shape[0];
                    let feat: usize = shape[1..].iter().product();
                    cur = cur.reshaped(&[n, feat])?;
                    caches.push(LayerCache::Flatten { shape });
                }
            }
        }
        Ok(ForwardPass { logits: cur, caches, stat_updates })
    }

    /// Propagates `dlogits` back through the cached pass. Returns gradients
    /// for every weight, bias, and BN affine parameter; running statistics
    /// never receive gradients.
    pub fn backward(&self, params: &ParamStore, pass: &ForwardPass, dlogits: &Tensor) -> Result<GradStore> {
        if pass.caches.len() != self.spec.layers.len() {
            return Err(CtaError::shape("forward caches", self.spec.layers.len(), pass.caches.len()));
        }
        let mut grads = GradStore::new();
        let mut dcur = dlogits.clone();
        for (i, layer) in self.spec.layers.iter().enumerate().rev() {
            let cache = &pass.caches[i];
            dcur = match (layer, cache) {
                (LayerSpec::Conv2d { .. }, LayerCache::Conv { x }) => {
                    let w = params.get(&format!("layer{i}.weight"))?;
                    let b = params.get(&format!("layer{i}.bias"))?;
                    let (dx, dw, db) = conv2d_backward(x, w, b, &dcur)?;
                    grads.accumulate(&format!("layer{i}.weight"), dw)?;
                    grads.accumulate(&format!("layer{i}.bias"), db)?;
                    dx
                }
                (LayerSpec::Dense { .. }, LayerCache::Dense { x }) => {
                    let w = params.get(&format!("layer{i}.weight"))?;
                    let (dx, dw, db) = dense_backward(x, w, &dcur)?;
                    grads.accumulate(&format!("layer{i}.weight"), dw)?;
                    grads.accumulate(&format!("layer{i}.bias"), db)?;
                    dx
                }
                (LayerSpec::BatchNorm { .. }, LayerCache::BatchNorm { x, mean, inv_std, frozen }) => {
                    let gamma = params.get(&format!("layer{i}.gamma"))?.data();
                    let (dx, dgamma, dbeta) = if *frozen {
                        bn_backward_frozen(x, mean, inv_std, gamma, &dcur)?
                    } else {
                        bn_backward_batch(x, mean, inv_std, gamma, &dcur)?
                    };
                    grads.accumulate(&format!("layer{i}.gamma"), Tensor::from_vec(&[dgamma.len()], dgamma)?)?;
                    grads.accumulate(&format!("layer{i}.beta"), Tensor::from_vec(&[dbeta.len()], dbeta)?)?;
                    dx
                }
                (LayerSpec::Relu, LayerCache::Relu { x }) => relu_backward(x, &dcur)?,
                (LayerSpec::AvgPool { .. }, LayerCache::AvgPool { shape, window }) => {
                    avgpool_backward(shape, *window, &dcur)?
                }
                (LayerSpec::Flatten, LayerCache::Flatten { shape }) => dcur.reshaped(shape)?,
                _ => {
                    return Err(CtaError::LayerCompose {
                        index: i,
                        kind: layer.kind_name().to_string(),
                        message: "cache does not match layer".into(),
                    });
                }
            };
        }
        Ok(grads)
    }

    /// Writes the running-statistic advances of a TrainUpdate pass into the
    /// store.
    pub fn commit_stats(&self, params: &mut ParamStore, updates: &[StatUpdate]) -> Result<()> {
        for u in updates {
            let mean = params.get_mut(&format!("layer{}.running_mean", u.layer))?;
            mean.data_mut().copy_from_slice(&u.mean);
            let var = params.get_mut(&format!("layer{}.running_var", u.layer))?;
            var.data_mut().copy_from_slice(&u.var);
        }
        Ok(())
    }

    /// Inference: softmax probabilities and argmax predictions (ties break
    /// toward the lowest class index).
    pub fn forward_eval(&self, params: &ParamStore, x: &Tensor, mode: StatMode) -> Result<(Tensor, Vec<usize>)> {
        let pass = self.forward(params, x, mode)?;
        let probs = softmax(&pass.logits)?;
        let preds = argmax_rows(&probs)?;
        Ok((probs, preds))
    }

    /// Fraction of correct predictions on a labeled batch.
    pub fn accuracy(&self, params: &ParamStore, x: &Tensor, labels: &[usize], mode: StatMode) -> Result<f64> {
        let (_, preds) = self.forward_eval(params, x, mode)?;
        if preds.len() != labels.len() {
            return Err(CtaError::shape("labels", preds.len(), labels.len()));
        }
        let correct = preds.iter().zip(labels).filter(|(p, l)| p == l).count();
        Ok(correct as f64 / labels.len().max(1) as f64)
    }
}

/// Row argmax; strict comparison keeps the lowest index on ties.
pub fn argmax_rows(probs: &Tensor) -> Result<Vec<usize>> {
    let [n, classes] = *probs.shape() else {
        return Err(CtaError::shape("argmax input", "rank 2", format!("{:?}", probs.shape())));
    };
    let data = probs.data();
    let mut out = Vec::with_capacity(n);
    for row in 0..n {
        let r = &data[row * classes..(row + 1) * classes];
        let mut best = 0;
        let mut best_v = r[0];
        for (j, &v) in r.iter().enumerate().skip(1) {
            if v > best_v {
                best_v = v;
                best = j;
            }
        }
        out.push(best);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::gradcheck::gradient_check;
    use crate::numerics::loss::{cross_entropy_of_softmax, one_hot};
    use crate::rng::uniform;

    fn tiny_spec() -> ModelSpec {
        ModelSpec {
            input_shape: [1, 6, 6],
            classes: 3,
            layers: vec![
                LayerSpec::Conv2d { in_channels: 1, out_channels: 2, kernel: 3 },
                LayerSpec::BatchNorm { channels: 2, epsilon: 1e-5, stat_momentum: 0.9 },
                LayerSpec::Relu,
                LayerSpec::AvgPool { window: 2 },
                LayerSpec::Flatten,
                LayerSpec::Dense { inputs: 2 * 3 * 3, outputs: 3 },
            ],
        }
    }

    fn random_batch(n: usize, shape: [usize; 3], seed: u64) -> Tensor {
        let mut rng = rng_from(seed, &[1]);
        let len = n * shape[0] * shape[1] * shape[2];
        let data: Vec<f64> = (0..len).map(|_| uniform(&mut rng) * 2.0 - 1.0).collect();
        Tensor::from_vec(&[n, shape[0], shape[1], shape[2]], data).unwrap()
    }

    #[test]
    fn same_seed_gives_bit_identical_params() {
        let spec = ModelSpec::desk([1, 32, 32], 10);
        let (_, a) = build_model(spec.clone(), 7).unwrap();
        let (_, b) = build_model(spec, 7).unwrap();
        for (name, entry) in a.iter() {
            assert!(entry.tensor.bit_identical(b.get(name).unwrap()), "{name} differs");
        }
    }

    #[test]
    fn fresh_bn_stats_are_identity() {
        let (_, params) = build_model(tiny_spec(), 1).unwrap();
        assert_eq!(params.get("layer1.running_mean").unwrap().data(), &[0.0, 0.0]);
        assert_eq!(params.get("layer1.running_var").unwrap().data(), &[1.0, 1.0]);
        assert_eq!(params.get("layer1.gamma").unwrap().data(), &[1.0, 1.0]);
        assert_eq!(params.get("layer1.beta").unwrap().data(), &[0.0, 0.0]);
    }

    #[test]
    fn frozen_mode_is_pure_inference() {
        let (net, params) = build_model(tiny_spec(), 3).unwrap();
        let x = random_batch(4, [1, 6, 6], 11);
        let (p1, _) = net.forward_eval(&params, &x, StatMode::FrozenSource).unwrap();
        let (p2, _) = net.forward_eval(&params, &x, StatMode::FrozenSource).unwrap();
        assert!(p1.bit_identical(&p2));
    }

    #[test]
    fn test_batch_mode_is_permutation_equivariant() {
        let (net, params) = build_model(tiny_spec(), 3).unwrap();
        let x = random_batch(5, [1, 6, 6], 13);
        let (probs, _) = net.forward_eval(&params, &x, StatMode::TestBatch).unwrap();
        // Reverse the batch and compare rows.
        let per_img = 36;
        let mut rev = Vec::with_capacity(x.len());
        for i in (0..5).rev() {
            rev.extend_from_slice(&x.data()[i * per_img..(i + 1) * per_img]);
        }
        let xr = Tensor::from_vec(&[5, 1, 6, 6], rev).unwrap();
        let (probs_r, _) = net.forward_eval(&params, &xr, StatMode::TestBatch).unwrap();
        for i in 0..5 {
            let a = &probs.data()[i * 3..(i + 1) * 3];
            let b = &probs_r.data()[(4 - i) * 3..(5 - i) * 3];
            for (x, y) in a.iter().zip(b) {
                assert!((x - y).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn untrained_model_scores_chance_on_balanced_labels() {
        let (net, params) = build_model(ModelSpec::desk([1, 16, 16], 10), 5).unwrap();
        let x = random_batch(1000, [1, 16, 16], 17);
        let labels: Vec<usize> = (0..1000).map(|i| i % 10).collect();
        let acc = net.accuracy(&params, &x, &labels, StatMode::TestBatch).unwrap();
        assert!((acc - 0.1).abs() <= 0.05, "chance-level accuracy violated: {acc}");
    }

    #[test]
    fn forward_never_mutates_the_store() {
        let (net, params) = build_model(tiny_spec(), 3).unwrap();
        let before = params.clone();
        let x = random_batch(4, [1, 6, 6], 19);
        for mode in [StatMode::FrozenSource, StatMode::TestBatch, StatMode::TrainUpdate] {
            let _ = net.forward(&params, &x, mode).unwrap();
        }
        assert_eq!(before.max_abs_diff(&params).unwrap(), 0.0);
    }

    #[test]
    fn commit_stats_applies_ema_advance() {
        let (net, mut params) = build_model(tiny_spec(), 3).unwrap();
        let x = random_batch(4, [1, 6, 6], 23);
        let pass = net.forward(&params, &x, StatMode::TrainUpdate).unwrap();
        assert_eq!(pass.stat_updates.len(), 1);
        net.commit_stats(&mut params, &pass.stat_updates).unwrap();
        let (bm, bv) = batch_stats(&pass.caches.iter().find_map(|c| match c {
            LayerCache::BatchNorm { x, .. } => Some(x.clone()),
            _ => None,
        }).unwrap()).unwrap();
        let rm = params.get("layer1.running_mean").unwrap().data();
        let rv = params.get("layer1.running_var").unwrap().data();
        for ch in 0..2 {
            assert!((rm[ch] - 0.1 * bm[ch]).abs() < 1e-12);
            assert!((rv[ch] - (0.9 + 0.1 * bv[ch])).abs() < 1e-12);
        }
    }

    #[test]
    fn argmax_breaks_ties_toward_lowest_index() {
        let probs = Tensor::from_vec(&[2, 3], vec![0.4, 0.4, 0.2, 0.1, 0.45, 0.45]).unwrap();
        assert_eq!(argmax_rows(&probs).unwrap(), vec![0, 1]);
    }

    fn network_grad_check(mode: StatMode, include_stats: bool) -> f64 {
        let spec = tiny_spec();
        let (net, params) = build_model(spec, 21).unwrap();
        let x = random_batch(3, [1, 6, 6], 29);
        let labels = one_hot(&[0, 2, 1], 3).unwrap();
        let names: Vec<String> = params
            .iter()
            .filter(|(_, e)| include_stats || e.role != ParamRole::BnStat)
            .map(|(n, _)| n.to_string())
            .collect();
        let tensors: Vec<Tensor> = names.iter().map(|n| params.get(n).unwrap().clone()).collect();
        let report = gradient_check(&tensors, 1e-5, 31, |values, _| {
            let mut p = params.clone();
            for (n, v) in names.iter().zip(values) {
                *p.get_mut(n).unwrap() = v.clone();
            }
            let pass = net.forward(&p, &x, mode)?;
            let (loss, dlogits, _) = cross_entropy_of_softmax(&labels, &pass.logits)?;
            let grads = net.backward(&p, &pass, &dlogits)?;
            let out: Vec<Tensor> = names
                .iter()
                .map(|n| grads.get(n).cloned().unwrap_or_else(|| Tensor::zeros(p.get(n).unwrap().shape())))
                .collect();
            Ok((loss, Some(out)))
        })
        .unwrap();
        report.max_rel_error
    }

    #[test]
    fn full_network_gradients_match_finite_differences_batch_stats() {
        // TestBatch gradients flow through the batch statistics themselves.
        // Running stats are unused here, so their zero gradient is exact.
        let err = network_grad_check(StatMode::TestBatch, true);
        assert!(err <= 1e-4, "max rel error {err}");
    }


    #[test]
    fn full_network_gradients_match_finite_differences_frozen_stats() {
        let err = network_grad_check(StatMode::FrozenSource, false);
        assert!(err <= 1e-4, "max rel error {err}");
    }
}
