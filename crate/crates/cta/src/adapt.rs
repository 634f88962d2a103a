//! Test-time adaptation strategies behind one adapter interface.
//!
//! All four methods consume unlabeled batches and return probabilities:
//!
//! * `Source` - frozen source model, running statistics, no adaptation.
//! * `Bn`     - source weights, but normalization statistics come from the
//!   current test batch. Stateless: nothing persists between batches.
//! * `Tent`   - BN statistics plus online entropy minimization updating only
//!   the normalization scale/shift (γ, β).
//! * `Cotta`  - mean-teacher self-training: the teacher predicts, the
//!   student learns toward a sharpened copy of the teacher's soft
//!   pseudo-labels, the teacher tracks the student by EMA, and each student
//!   scalar is stochastically restored to its source value.
//!
//! Committed parameter state always lives on the f32 grid (the checkpoint
//! precision), so any adapter state written to disk reloads bit-exactly.

use log::warn;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{CtaError, Result};
use crate::model::network::{argmax_rows, Network};
use crate::model::params::{optimizer_step, ParamRole, ParamStore};
use crate::numerics::batchnorm::ema_slice;
use crate::numerics::loss::{cross_entropy_of_softmax, entropy_of_softmax, softmax};
use crate::numerics::optim::{OptimizerKind, OptimizerState};
use crate::numerics::tensor::Tensor;
use crate::numerics::StatMode;
use crate::rng::{bernoulli, rng_from};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AdaptMethod {
    Source,
    Bn,
    Tent,
    Cotta,
}

impl AdaptMethod {
    pub fn name(&self) -> &'static str {
        match self {
            AdaptMethod::Source => "source",
            AdaptMethod::Bn => "bn",
            AdaptMethod::Tent => "tent",
            AdaptMethod::Cotta => "cotta",
        }
    }

    pub fn all() -> [AdaptMethod; 4] {
        [AdaptMethod::Source, AdaptMethod::Bn, AdaptMethod::Tent, AdaptMethod::Cotta]
    }
}

/// Learning rates tuned on the default benchmark; used wherever a config
/// does not pin its own. TENT's is chosen on the short-term protocol,
/// CoTTA's on the long-term protocol (where doubling it again makes the
/// student collapse instead of climb).
pub const TENT_DEFAULT_LR: f64 = 1e-2;
pub const COTTA_DEFAULT_LR: f64 = 1e-1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdapterConfig {
    pub method: AdaptMethod,
    /// Ignored for Source/Bn.
    pub learning_rate: f64,
    /// Teacher EMA weight on the old value; ignored outside Cotta.
    pub cotta_alpha: f64,
    /// Per-scalar restore probability; ignored outside Cotta.
    pub restore_prob: f64,
    pub optimizer: OptimizerKind,
    /// Seed for the restore draws (the only stochastic part of any method).
    pub seed: u64,
}

impl AdapterConfig {
    pub fn source() -> Self {
        AdapterConfig {
            method: AdaptMethod::Source,
            learning_rate: 0.0,
            cotta_alpha: 0.0,
            restore_prob: 0.0,
            optimizer: OptimizerKind::sgd(0.0),
            seed: 0,
        }
    }

    pub fn bn() -> Self {
        AdapterConfig { method: AdaptMethod::Bn, ..AdapterConfig::source() }
    }

    /// Entropy minimization with its default optimizer (Adam).
    pub fn tent(learning_rate: f64) -> Self {
        AdapterConfig {
            method: AdaptMethod::Tent,
            learning_rate,
            optimizer: OptimizerKind::adam_default(),
            ..AdapterConfig::source()
        }
    }

    /// Mean-teacher adaptation with its default optimizer (SGD, momentum
    /// 0.9), teacher smoothing 0.99 and restore probability 0.01.
    pub fn cotta(learning_rate: f64, seed: u64) -> Self {
        AdapterConfig {
            method: AdaptMethod::Cotta,
            learning_rate,
            cotta_alpha: 0.99,
            restore_prob: 0.01,
            optimizer: OptimizerKind::sgd(0.9),
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.method {
            AdaptMethod::Source | AdaptMethod::Bn => {}
            AdaptMethod::Tent | AdaptMethod::Cotta => {
                if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
                    return Err(CtaError::invalid(
                        "learning_rate",
                        format!("{} requires a positive learning rate, got {}", self.method.name(), self.learning_rate),
                    ));
                }
            }
        }
        if !(0.0..=1.0).contains(&self.cotta_alpha) {
            return Err(CtaError::invalid("cotta_alpha", format!("must lie in [0,1], got {}", self.cotta_alpha)));
        }
        if !(0.0..=1.0).contains(&self.restore_prob) {
            return Err(CtaError::invalid("restore_prob", format!("must lie in [0,1], got {}", self.restore_prob)));
        }
        Ok(())
    }
}

/// Predictions for one batch.
pub struct StepOutput {
    /// Row-stochastic class probabilities.
    pub probs: Tensor,
    /// Argmax per row, ties toward the lowest index.
    pub predictions: Vec<usize>,
    /// Mean prediction entropy of `probs` (natural log).
    pub mean_entropy: f64,
}

/// One persistent adaptation run: a source snapshot plus whatever mutable
/// state the method accumulates. Persists across domain boundaries; the
/// protocols never reset it.
#[derive(Clone)]
pub struct Adapter {
    net: Network,
    config: AdapterConfig,
    student: ParamStore,
    snapshot: ParamStore,
    teacher: Option<ParamStore>,
    opt: OptimizerState,
    steps: u64,
    restore_rng: ChaCha8Rng,
}

/// Squares each probability row and renormalizes it to sum to one, i.e.
/// applies softmax temperature 1/2. Argmax is preserved; mass moves toward
/// the dominant classes.
pub fn sharpen_rows(probs: &Tensor) -> Result<Tensor> {
    let [rows, cols] = *probs.shape() else {
        return Err(CtaError::shape("sharpen_rows", "rank 2", format!("{:?}", probs.shape())));
    };
    let mut out = probs.clone();
    for r in 0..rows {
        let row = &mut out.data_mut()[r * cols..(r + 1) * cols];
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v *= *v;
            sum += *v;
        }
        if !(sum > 0.0) {
            return Err(CtaError::NonFinite(format!("sharpen_rows: row {r} has no mass")));
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Ok(out)
}

pub fn make_adapter(net: &Network, params: &ParamStore, config: AdapterConfig) -> Result<Adapter> {
    config.validate()?;
    let mut snapshot = params.clone();
    snapshot.quantize_f32();
    let opt = OptimizerState::new(config.optimizer, config.learning_rate)?;
    let teacher = match config.method {
        AdaptMethod::Cotta => Some(snapshot.clone()),
        _ => None,
    };
    let restore_rng = rng_from(config.seed, &[0x7265_7374]);
    Ok(Adapter {
        net: net.clone(),
        config,
        student: snapshot.clone(),
        snapshot,
        teacher,
        opt,
        steps: 0,
        restore_rng,
    })
}

impl Adapter {
    pub fn method(&self) -> AdaptMethod {
        self.config.method
    }

    pub fn config(&self) -> &AdapterConfig {
        &self.config
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn student(&self) -> &ParamStore {
        &self.student
    }

    pub fn snapshot(&self) -> &ParamStore {
        &self.snapshot
    }

    pub fn teacher(&self) -> Option<&ParamStore> {
        self.teacher.as_ref()
    }

    /// Restores the adapter to its just-built state: student (and teacher)
    /// back to the snapshot, optimizer moments cleared, restore generator
    /// re-derived. Unused by the protocols, which deliberately never reset.
    pub fn reset(&mut self) {
        self.student = self.snapshot.clone();
        if self.teacher.is_some() {
            self.teacher = Some(self.snapshot.clone());
        }
        self.opt.reset_moments();
        self.steps = 0;
        self.restore_rng = rng_from(self.config.seed, &[0x7265_7374]);
    }

    fn guard_batch(&self, batch: &Tensor) -> Result<()> {
        let n = batch.shape().first().copied().unwrap_or(0);
        if n < 2 {
            return Err(CtaError::BatchTooSmall { got: n, min: 2 });
        }
        Ok(())
    }

    /// Read-only inference with the method's statistics convention: frozen
    /// running stats for Source, test-batch stats for the rest; CoTTA
    /// predictions come from the teacher. Never advances any state, which is
    /// what the pre/post source evaluations of the protocols require.
    pub fn infer(&self, batch: &Tensor) -> Result<StepOutput> {
        self.guard_batch(batch)?;
        let (params, mode) = match self.config.method {
            AdaptMethod::Source => (&self.snapshot, StatMode::FrozenSource),
            AdaptMethod::Bn => (&self.snapshot, StatMode::TestBatch),
            AdaptMethod::Tent => (&self.student, StatMode::TestBatch),
            AdaptMethod::Cotta => (
                self.teacher.as_ref().expect("cotta adapter carries a teacher"),
                StatMode::TestBatch,
            ),
        };
        let (probs, predictions) = self.net.forward_eval(params, batch, mode)?;
        let mean_entropy = crate::numerics::loss::shannon_entropy(&probs)?;
        Ok(StepOutput { probs, predictions, mean_entropy })
    }

    /// Consumes one unlabeled batch: returns predictions and applies the
    /// method's update. Source/Bn updates are no-ops by construction.
    pub fn step(&mut self, batch: &Tensor) -> Result<StepOutput> {
        self.guard_batch(batch)?;
        match self.config.method {
            AdaptMethod::Source | AdaptMethod::Bn => self.infer(batch),
            AdaptMethod::Tent => self.step_tent(batch),
            AdaptMethod::Cotta => self.step_cotta(batch),
        }
    }

    /// Forward with test-batch statistics, then one entropy-minimization
    /// step on the BN affine parameters. Predictions are from the forward
    /// pass, i.e. before the update.
    fn step_tent(&mut self, batch: &Tensor) -> Result<StepOutput> {
        let pass = self.net.forward(&self.student, batch, StatMode::TestBatch)?;
        let (loss, dlogits, probs) = entropy_of_softmax(&pass.logits)?;
        let predictions = argmax_rows(&probs)?;
        let out = StepOutput { mean_entropy: loss, probs, predictions };
        if !loss.is_finite() {
            warn!("tent step {}: non-finite entropy, skipping update", self.steps);
            self.steps += 1;
            return Ok(out);
        }
        let grads = self.net.backward(&self.student, &pass, &dlogits)?;
        optimizer_step(&mut self.student, &grads, &mut self.opt, |r| r == ParamRole::BnAffine)?;
        self.student.quantize_f32();
        self.steps += 1;
        Ok(out)
    }

    /// Teacher predicts, student learns toward the teacher's soft labels,
    /// teacher tracks the student by EMA, and each student scalar reverts
    /// to its source value with probability `restore_prob`.
    ///
    /// The distillation target is the teacher's softmax sharpened by
    /// squaring (temperature 1/2). Without sharpening the loss gradient is
    /// identically zero while student and teacher agree, which they do at
    /// initialization, and the whole method would be a fixed point.
    /// Sharpening preserves the argmax, so the returned predictions are
    /// still exactly the teacher's.
    fn step_cotta(&mut self, batch: &Tensor) -> Result<StepOutput> {
        let alpha = self.config.cotta_alpha;
        let teacher = self.teacher.as_ref().expect("cotta adapter carries a teacher");

        // (1) teacher pseudo-labels; these are also the returned predictions
        let teacher_pass = self.net.forward(teacher, batch, StatMode::TestBatch)?;
        let q = softmax(&teacher_pass.logits)?;
        let predictions = argmax_rows(&q)?;
        let mean_entropy = crate::numerics::loss::shannon_entropy(&q)?;

        // (2, 3) student forward, soft cross-entropy toward the sharpened
        // pseudo-labels
        let target = sharpen_rows(&q)?;
        let student_pass = self.net.forward(&self.student, batch, StatMode::TestBatch)?;
        let (loss, dlogits, _) = cross_entropy_of_softmax(&target, &student_pass.logits)?;
        if !loss.is_finite() {
            warn!("cotta step {}: non-finite loss, skipping update", self.steps);
            self.steps += 1;
            return Ok(StepOutput { probs: q, predictions, mean_entropy });
        }

        // (4) update every student parameter except running statistics
        let grads = self.net.backward(&self.student, &student_pass, &dlogits)?;
        optimizer_step(&mut self.student, &grads, &mut self.opt, |r| r != ParamRole::BnStat)?;
        self.student.quantize_f32();

        // (5) teacher <- alpha * teacher + (1 - alpha) * student
        let teacher = self.teacher.as_mut().expect("cotta adapter carries a teacher");
        for (name, entry) in teacher.iter_mut() {
            let student_t = self.student.get(name)?;
            let blended = ema_slice(entry.tensor.data(), student_t.data(), alpha)?;
            entry.tensor.data_mut().copy_from_slice(&blended);
        }
        teacher.quantize_f32();

        // (6) per-scalar stochastic restore of the student to the snapshot
        if self.config.restore_prob > 0.0 {
            let p = self.config.restore_prob;
            for (name, entry) in self.student.iter_mut() {
                let source = self.snapshot.get(name)?;
                for (value, &orig) in entry.tensor.data_mut().iter_mut().zip(source.data()) {
                    if bernoulli(&mut self.restore_rng, p) {
                        *value = orig;
                    }
                }
            }
        }

        self.steps += 1;
        Ok(StepOutput { probs: q, predictions, mean_entropy })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::network::build_model;
    use crate::model::spec::ModelSpec;
    use crate::rng::uniform;

    fn small_net() -> (Network, ParamStore) {
        let (net, mut params) = build_model(ModelSpec::desk([1, 16, 16], 4), 3).unwrap();
        params.quantize_f32();
        (net, params)
    }

    fn batch(n: usize, seed: u64) -> Tensor {
        let mut rng = rng_from(seed, &[0xba7c]);
        let data: Vec<f64> = (0..n * 256).map(|_| uniform(&mut rng)).collect();
        Tensor::from_vec(&[n, 1, 16, 16], data).unwrap()
    }

    #[test]
    fn bn_is_stateless_across_batches() {
        let (net, params) = small_net();
        let mut a = make_adapter(&net, &params, AdapterConfig::bn()).unwrap();
        let b1 = batch(8, 1);
        let first = a.step(&b1).unwrap();
        // interleave other batches, then re-present the first
        for s in 2..6 {
            a.step(&batch(8, s)).unwrap();
        }
        let again = a.step(&b1).unwrap();
        assert!(first.probs.bit_identical(&again.probs));
    }

    #[test]
    fn source_and_bn_never_move_parameters() {
        let (net, params) = small_net();
        for cfg in [AdapterConfig::source(), AdapterConfig::bn()] {
            let mut a = make_adapter(&net, &params, cfg).unwrap();
            for s in 0..5 {
                a.step(&batch(8, s)).unwrap();
            }
            assert_eq!(a.student().max_abs_diff(a.snapshot()).unwrap(), 0.0);
        }
    }

    #[test]
    fn tent_touches_only_bn_affine() {
        let (net, params) = small_net();
        let mut a = make_adapter(&net, &params, AdapterConfig::tent(1e-3)).unwrap();
        for s in 0..100 {
            a.step(&batch(8, s)).unwrap();
        }
        assert!(a
            .student()
            .bit_identical_for_roles(a.snapshot(), &[ParamRole::Weight, ParamRole::Bias, ParamRole::BnStat])
            .unwrap());
        // and the affine parameters did move
        assert!(!a
            .student()
            .bit_identical_for_roles(a.snapshot(), &[ParamRole::BnAffine])
            .unwrap());
    }

    #[test]
    fn tent_returns_pre_update_predictions() {
        let (net, params) = small_net();
        let mut a = make_adapter(&net, &params, AdapterConfig::tent(0.05)).unwrap();
        let b = batch(8, 7);
        // Fresh student equals snapshot, so the first step's probs must
        // match plain BN inference even though the step then updates.
        let bn_probs = make_adapter(&net, &params, AdapterConfig::bn())
            .unwrap()
            .infer(&b)
            .unwrap()
            .probs;
        let stepped = a.step(&b).unwrap();
        assert!(stepped.probs.bit_identical(&bn_probs));
        assert!(!a.student().bit_identical_for_roles(a.snapshot(), &[ParamRole::BnAffine]).unwrap());
    }

    #[test]
    fn tent_first_step_descends_entropy_at_small_lr() {
        let (net, params) = small_net();
        let mut a = make_adapter(&net, &params, AdapterConfig::tent(1e-4)).unwrap();
        let b = batch(16, 9);
        let before = a.step(&b).unwrap().mean_entropy;
        let after = a.infer(&b).unwrap().mean_entropy;
        assert!(after <= before, "entropy rose: {before} -> {after}");
    }

    #[test]
    fn cotta_frozen_teacher_matches_bn() {
        let (net, params) = small_net();
        let mut cfg = AdapterConfig::cotta(1e-2, 5);
        cfg.cotta_alpha = 1.0;
        cfg.restore_prob = 0.0;
        let mut a = make_adapter(&net, &params, cfg).unwrap();
        let bn = make_adapter(&net, &params, AdapterConfig::bn()).unwrap();
        for s in 0..5 {
            let b = batch(8, 40 + s);
            let out = a.step(&b).unwrap();
            let want = bn.infer(&b).unwrap();
            assert!(out.probs.bit_identical(&want.probs), "batch {s}");
        }
        assert_eq!(a.teacher().unwrap().max_abs_diff(a.snapshot()).unwrap(), 0.0);
    }

    #[test]
    fn cotta_full_restore_pins_student_to_snapshot() {
        let (net, params) = small_net();
        let mut cfg = AdapterConfig::cotta(1e-2, 5);
        cfg.restore_prob = 1.0;
        let mut a = make_adapter(&net, &params, cfg).unwrap();
        for s in 0..3 {
            a.step(&batch(8, 60 + s)).unwrap();
            assert_eq!(a.student().max_abs_diff(a.snapshot()).unwrap(), 0.0, "step {s}");
        }
    }

    #[test]
    fn cotta_is_deterministic_given_seed() {
        let (net, params) = small_net();
        let run = || {
            let mut a = make_adapter(&net, &params, AdapterConfig::cotta(1e-2, 11)).unwrap();
            for s in 0..10 {
                a.step(&batch(8, 80 + s)).unwrap();
            }
            (a.student().clone(), a.teacher().unwrap().clone())
        };
        let (s1, t1) = run();
        let (s2, t2) = run();
        assert_eq!(s1.max_abs_diff(&s2).unwrap(), 0.0);
        assert_eq!(t1.max_abs_diff(&t2).unwrap(), 0.0);
    }

    #[test]
    fn reset_restores_the_just_built_state() {
        let (net, params) = small_net();
        let mut a = make_adapter(&net, &params, AdapterConfig::cotta(1e-2, 13)).unwrap();
        for s in 0..5 {
            a.step(&batch(8, 100 + s)).unwrap();
        }
        a.reset();
        assert_eq!(a.steps(), 0);
        assert_eq!(a.student().max_abs_diff(a.snapshot()).unwrap(), 0.0);
        assert_eq!(a.teacher().unwrap().max_abs_diff(a.snapshot()).unwrap(), 0.0);
        // Behaves like a fresh adapter from here on.
        let mut fresh = make_adapter(&net, &params, AdapterConfig::cotta(1e-2, 13)).unwrap();
        let b = batch(8, 200);
        a.step(&b).unwrap();
        fresh.step(&b).unwrap();
        assert_eq!(a.student().max_abs_diff(fresh.student()).unwrap(), 0.0);
    }

    #[test]
    fn undersized_batches_are_rejected() {
        let (net, params) = small_net();
        let mut a = make_adapter(&net, &params, AdapterConfig::bn()).unwrap();
        let one = batch(1, 1);
        assert!(matches!(a.step(&one), Err(CtaError::BatchTooSmall { got: 1, min: 2 })));
        assert!(matches!(a.infer(&one), Err(CtaError::BatchTooSmall { .. })));
    }

    #[test]
    fn learning_methods_require_positive_learning_rate() {
        let (net, params) = small_net();
        assert!(make_adapter(&net, &params, AdapterConfig::tent(0.0)).is_err());
        assert!(make_adapter(&net, &params, AdapterConfig::cotta(-1.0, 3)).is_err());
    }

    #[test]
    fn sharpen_squares_and_renormalizes() {
        let p = Tensor::from_vec(&[2, 3], vec![0.5, 0.25, 0.25, 1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0]).unwrap();
        let s = sharpen_rows(&p).unwrap();
        let d = s.data();
        // (0.25, 0.0625, 0.0625) / 0.375
        assert!((d[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((d[1] - 1.0 / 6.0).abs() < 1e-12);
        assert!((d[2] - 1.0 / 6.0).abs() < 1e-12);
        // A uniform row is a fixed point of sharpening.
        for k in 3..6 {
            assert!((d[k] - 1.0 / 3.0).abs() < 1e-12);
        }
        assert!(sharpen_rows(&Tensor::zeros(&[2, 3])).is_err());
        assert!(sharpen_rows(&Tensor::zeros(&[4])).is_err());
    }

    #[test]
    fn cotta_student_moves_even_from_symmetric_start() {
        // Teacher and student start identical; the sharpened target is what
        // keeps the first step's gradient nonzero.
        let (net, params) = small_net();
        let mut a = make_adapter(&net, &params, AdapterConfig::cotta(1e-2, 21)).unwrap();
        a.step(&batch(8, 300)).unwrap();
        assert!(a.student().max_abs_diff(a.snapshot()).unwrap() > 0.0);
        // The teacher trails the student after the EMA update.
        assert!(a.teacher().unwrap().max_abs_diff(a.snapshot()).unwrap() > 0.0);
    }

    #[test]
    fn restore_rate_matches_probability() {
        // Empirical restore fraction over many scalars and steps stays
        // within 3 standard errors of p.
        let (net, params) = small_net();
        let mut cfg = AdapterConfig::cotta(1e-9, 17);
        cfg.restore_prob = 0.01;
        let mut a = make_adapter(&net, &params, cfg).unwrap();
        // Count how many bernoulli draws fire by instrumenting indirectly:
        // run steps and count scalars that ended exactly at snapshot values
        // is confounded by tiny lr, so sample the generator directly.
        let mut rng = rng_from(17, &[0x7265_7374]);
        let trials = 10_000 * 100;
        let mut hits = 0u64;
        for _ in 0..trials {
            if bernoulli(&mut rng, 0.01) {
                hits += 1;
            }
        }
        let rate = hits as f64 / trials as f64;
        let tol = 3.0 * (0.01f64 * 0.99 / trials as f64).sqrt();
        assert!((rate - 0.01).abs() <= tol, "rate {rate}, tol {tol}");
        // keep the adapter exercised so the config path is covered
        a.step(&batch(4, 1)).unwrap();
    }
}
