//! Evaluation protocols: short-term, long-term, and the batch-size sweep.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::adapt::{make_adapter, Adapter, AdapterConfig};
use crate::error::{CtaError, Result};
use crate::harness::report::{
    BatchTelemetry, ForgetRate, RunReport, StageScore, STAGE_SOURCE_POST, STAGE_SOURCE_PRE,
};
use crate::model::{Network, ParamStore};
use crate::rng::derive_seed;
use crate::shiftgen::{stream_batches, SyntheticDataset};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ProtocolKind {
    Short,
    Long,
    Sweep,
}

/// What to run and how. One spec drives one adapter through one protocol;
/// seed replicas reuse the spec with different run seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolSpec {
    pub kind: ProtocolKind,
    pub source_domains: Vec<String>,
    /// Target domain ids in adaptation order.
    pub target_domains: Vec<String>,
    pub batch_size: usize,
    /// Adaptation epochs for the long protocol; short runs ignore it.
    pub epochs: usize,
    /// Batch sizes for the sweep protocol, ascending.
    pub batch_sizes: Vec<usize>,
    /// Seed replica count; reports are aggregated over this many runs.
    pub seeds: usize,
    pub adapter: AdapterConfig,
}

pub const DEFAULT_BATCH_SIZE: usize = 128;
pub const DEFAULT_SWEEP_BATCH_SIZES: [usize; 8] = [2, 4, 8, 16, 32, 64, 128, 256];
pub const DEFAULT_SEED_REPLICAS: usize = 3;

impl ProtocolSpec {
    pub fn new(kind: ProtocolKind, targets: Vec<String>, adapter: AdapterConfig) -> Self {
        ProtocolSpec {
            kind,
            source_domains: vec!["source".into()],
            target_domains: targets,
            batch_size: DEFAULT_BATCH_SIZE,
            epochs: if kind == ProtocolKind::Long { 10 } else { 1 },
            batch_sizes: DEFAULT_SWEEP_BATCH_SIZES.to_vec(),
            seeds: DEFAULT_SEED_REPLICAS,
            adapter,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.source_domains.is_empty() {
            return Err(CtaError::Protocol("protocol has no source domains".into()));
        }
        if self.target_domains.is_empty() {
            return Err(CtaError::Protocol("protocol has no target domains".into()));
        }
        for s in &self.source_domains {
            if self.target_domains.contains(s) {
                return Err(CtaError::Protocol(format!(
                    "domain '{s}' appears as both source and target; the sets must be disjoint"
                )));
            }
        }
        if self.batch_size < 2 {
            return Err(CtaError::BatchTooSmall { got: self.batch_size, min: 2 });
        }
        if self.kind == ProtocolKind::Long && self.epochs == 0 {
            return Err(CtaError::Protocol("long protocol needs at least 1 epoch".into()));
        }
        if self.kind == ProtocolKind::Sweep {
            if self.batch_sizes.is_empty() {
                return Err(CtaError::Protocol("sweep protocol needs at least one batch size".into()));
            }
            if self.batch_sizes.windows(2).any(|w| w[0] >= w[1]) {
                return Err(CtaError::Protocol(format!(
                    "sweep batch sizes must be strictly ascending, got {:?}",
                    self.batch_sizes
                )));
            }
            if self.batch_sizes[0] < 2 {
                return Err(CtaError::BatchTooSmall { got: self.batch_sizes[0], min: 2 });
            }
        }
        if self.seeds == 0 {
            return Err(CtaError::Protocol("protocol needs at least one seed replica".into()));
        }
        self.adapter.validate()
    }
}

/// A protocol bound to its data and model, ready to run.
pub struct ProtocolRun<'a> {
    pub spec: &'a ProtocolSpec,
    pub net: &'a Network,
    pub params: &'a ParamStore,
    pub source_val: &'a SyntheticDataset,
    /// Datasets in `spec.target_domains` order.
    pub targets: &'a [SyntheticDataset],
}

const STREAM_SEED_TAG: u64 = 0x6570_6f63;
const EVAL_SEED_TAG: u64 = 0x6576_616c;
const ADAPTER_SEED_TAG: u64 = 0x6164_7074;
const SWEEP_SEED_TAG: u64 = 0x7377_6570;

/// Supplementary sweep row name for the source validation set.
pub const SWEEP_SOURCE_VAL: &str = "source_val";

impl ProtocolRun<'_> {
    fn check(&self) -> Result<()> {
        self.spec.validate()?;
        if self.targets.len() != self.spec.target_domains.len()
            || self
                .targets
                .iter()
                .zip(&self.spec.target_domains)
                .any(|(ds, id)| &ds.domain_id != id)
        {
            let got: Vec<&str> = self.targets.iter().map(|d| d.domain_id.as_str()).collect();
            return Err(CtaError::Protocol(format!(
                "target datasets {:?} do not match the protocol's target domains {:?}",
                got, self.spec.target_domains
            )));
        }
        if self.source_val.is_empty() {
            return Err(CtaError::EmptyInput("source validation set".into()));
        }
        Ok(())
    }

    fn build_adapter(&self, run_seed: u64) -> Result<Adapter> {
        // Each seed replica gets its own adapter stream; everything else
        // about the adapter comes from the spec.
        let mut config = self.spec.adapter.clone();
        config.seed = derive_seed(run_seed, &[ADAPTER_SEED_TAG]);
        make_adapter(self.net, self.params, config)
    }

    /// Read-only accuracy of `adapter` on a dataset, streamed at the
    /// protocol batch size with a seeded batch composition. Inference
    /// never touches adapter state, which is what makes the pre and post
    /// bookends and the per-epoch disposable evaluations exact.
    fn eval_accuracy(&self, adapter: &Adapter, ds: &SyntheticDataset, batch_size: usize, seed: u64) -> Result<f64> {
        let mut correct = 0usize;
        let mut total = 0usize;
        for batch in stream_batches(std::slice::from_ref(ds), batch_size, seed)? {
            let out = adapter.infer(&batch.images)?;
            correct += out
                .predictions
                .iter()
                .zip(&batch.labels)
                .filter(|(p, l)| p == l)
                .count();
            total += batch.labels.len();
        }
        Ok(100.0 * correct as f64 / total as f64)
    }

    /// One adaptation pass over all target domains in order. Returns the
    /// per-domain stage scores and appends telemetry rows.
    fn adapt_epoch(
        &self,
        adapter: &mut Adapter,
        epoch: usize,
        run_seed: u64,
        telemetry: &mut Vec<BatchTelemetry>,
    ) -> Result<Vec<StageScore>> {
        let stream_seed = derive_seed(run_seed, &[STREAM_SEED_TAG, epoch as u64]);
        let mut per_domain: Vec<(String, usize, usize)> = self
            .spec
            .target_domains
            .iter()
            .map(|id| (id.clone(), 0usize, 0usize))
            .collect();
        for batch in stream_batches(self.targets, self.spec.batch_size, stream_seed)? {
            let out = adapter.step(&batch.images)?;
            let correct = out
                .predictions
                .iter()
                .zip(&batch.labels)
                .filter(|(p, l)| p == l)
                .count();
            let slot = per_domain
                .iter_mut()
                .find(|(id, _, _)| *id == batch.domain_id)
                .expect("stream emits only protocol domains");
            slot.1 += correct;
            slot.2 += batch.labels.len();
            telemetry.push(BatchTelemetry {
                epoch,
                domain_id: batch.domain_id,
                batch_index: batch.batch_index,
                mean_entropy: out.mean_entropy,
                batch_accuracy: 100.0 * correct as f64 / batch.labels.len() as f64,
            });
        }
        Ok(per_domain
            .into_iter()
            .enumerate()
            .map(|(i, (name, correct, total))| StageScore {
                epoch,
                index: i + 1,
                name,
                accuracy: 100.0 * correct as f64 / total as f64,
            })
            .collect())
    }

    /// One pass over the targets with source-val bookends.
    ///
    /// The adapter is built once and never reset across domain changes.
    /// Bookend evaluations share one batch-composition seed, so a
    /// stateless adapter scores bit-identically on both.
    pub fn run_short_term(&self, run_seed: u64) -> Result<RunReport> {
        self.check()?;
        let clock = Instant::now();
        let mut adapter = self.build_adapter(run_seed)?;
        let eval_seed = derive_seed(run_seed, &[EVAL_SEED_TAG]);
        let post_index = self.spec.target_domains.len() + 1;

        let pre = self.eval_accuracy(&adapter, self.source_val, self.spec.batch_size, eval_seed)?;
        let mut stages = vec![StageScore {
            epoch: 1,
            index: 0,
            name: STAGE_SOURCE_PRE.into(),
            accuracy: pre,
        }];
        let mut telemetry = Vec::new();
        stages.extend(self.adapt_epoch(&mut adapter, 1, run_seed, &mut telemetry)?);
        let post = self.eval_accuracy(&adapter, self.source_val, self.spec.batch_size, eval_seed)?;
        stages.push(StageScore {
            epoch: 1,
            index: post_index,
            name: STAGE_SOURCE_POST.into(),
            accuracy: post,
        });

        let mean_accuracy = stages.iter().map(|s| s.accuracy).sum::<f64>() / stages.len() as f64;
        Ok(RunReport {
            adapter: self.spec.adapter.method.name().into(),
            seed: run_seed,
            stages,
            mean_accuracy,
            forget_rates: vec![ForgetRate { epoch: 1, value: pre - post }],
            telemetry,
            wall_clock_secs: clock.elapsed().as_secs_f64(),
        })
    }

    /// Repeats the target cycle for `spec.epochs` epochs with fresh
    /// within-domain shuffles. Epoch 1 uses the same stream seed as a
    /// short-term run, so it reproduces that pass bit-exactly.
    ///
    /// Source validation happens once before adaptation and then after
    /// every epoch. Per-epoch evaluations go through the read-only
    /// inference path, which is exactly the contract of evaluating a
    /// disposable copy: the live adapter's optimization state never
    /// advances on source data.
    pub fn run_long_term(&self, run_seed: u64) -> Result<RunReport> {
        self.check()?;
        let clock = Instant::now();
        let mut adapter = self.build_adapter(run_seed)?;
        let eval_seed = derive_seed(run_seed, &[EVAL_SEED_TAG]);
        let post_index = self.spec.target_domains.len() + 1;

        let pre = self.eval_accuracy(&adapter, self.source_val, self.spec.batch_size, eval_seed)?;
        let mut stages = vec![StageScore {
            epoch: 1,
            index: 0,
            name: STAGE_SOURCE_PRE.into(),
            accuracy: pre,
        }];
        let mut telemetry = Vec::new();
        let mut forget_rates = Vec::with_capacity(self.spec.epochs);
        for epoch in 1..=self.spec.epochs {
            stages.extend(self.adapt_epoch(&mut adapter, epoch, run_seed, &mut telemetry)?);
            let post = self.eval_accuracy(&adapter, self.source_val, self.spec.batch_size, eval_seed)?;
            stages.push(StageScore {
                epoch,
                index: post_index,
                name: STAGE_SOURCE_POST.into(),
                accuracy: post,
            });
            forget_rates.push(ForgetRate { epoch, value: pre - post });
        }

        let mean_accuracy = stages.iter().map(|s| s.accuracy).sum::<f64>() / stages.len() as f64;
        Ok(RunReport {
            adapter: self.spec.adapter.method.name().into(),
            seed: run_seed,
            stages,
            mean_accuracy,
            forget_rates,
            telemetry,
            wall_clock_secs: clock.elapsed().as_secs_f64(),
        })
    }
}

/// One (batch size, domain) cell of a sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub batch_size: usize,
    pub domain_id: String,
    pub source_accuracy: f64,
    pub bn_accuracy: f64,
    /// BN minus Source, percentage points. May be negative.
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub seed: u64,
    pub rows: Vec<SweepRow>,
    /// (batch size, mean gain over target domains).
    pub curve: Vec<(usize, f64)>,
    pub wall_clock_secs: f64,
}

impl SweepReport {
    pub fn gain_at(&self, batch_size: usize) -> Option<f64> {
        self.curve.iter().find(|(b, _)| *b == batch_size).map(|(_, g)| *g)
    }
}

impl ProtocolRun<'_> {
    /// Evaluates Source and BN on every target domain at each batch size
    /// and reports per-domain gains plus the mean-gain curve.
    ///
    /// The source validation set is also scored as a supplementary
    /// `source_val` row at each batch size (capped at the set's length so
    /// large batch sizes degrade to whole-set statistics); it does not
    /// enter the mean-gain curve.
    pub fn run_batch_sweep(&self, run_seed: u64) -> Result<SweepReport> {
        self.check()?;
        let clock = Instant::now();
        let smallest = self.targets.iter().map(|d| d.len()).min().unwrap_or(0);
        if let Some(&too_big) = self.spec.batch_sizes.iter().find(|&&b| b > smallest) {
            return Err(CtaError::Protocol(format!(
                "sweep batch size {too_big} exceeds the smallest target domain ({smallest} samples)"
            )));
        }
        let source = make_adapter(self.net, self.params, AdapterConfig::source())?;
        let bn = make_adapter(self.net, self.params, AdapterConfig::bn())?;
        let mut rows = Vec::new();
        let mut curve = Vec::new();
        for &batch_size in &self.spec.batch_sizes {
            let eval_seed = derive_seed(run_seed, &[SWEEP_SEED_TAG, batch_size as u64]);
            let mut gains = Vec::new();
            for ds in self.targets {
                let s = self.eval_accuracy(&source, ds, batch_size, eval_seed)?;
                let b = self.eval_accuracy(&bn, ds, batch_size, eval_seed)?;
                rows.push(SweepRow {
                    batch_size,
                    domain_id: ds.domain_id.clone(),
                    source_accuracy: s,
                    bn_accuracy: b,
                    gain: b - s,
                });
                gains.push(b - s);
            }
            let val_batch = batch_size.min(self.source_val.len());
            let s = self.eval_accuracy(&source, self.source_val, val_batch, eval_seed)?;
            let b = self.eval_accuracy(&bn, self.source_val, val_batch, eval_seed)?;
            rows.push(SweepRow {
                batch_size,
                domain_id: SWEEP_SOURCE_VAL.into(),
                source_accuracy: s,
                bn_accuracy: b,
                gain: b - s,
            });
            curve.push((batch_size, gains.iter().sum::<f64>() / gains.len() as f64));
        }
        Ok(SweepReport {
            seed: run_seed,
            rows,
            curve,
            wall_clock_secs: clock.elapsed().as_secs_f64(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{build_model, train_source, ModelSpec, ParamRole};
    use crate::numerics::{OptimizerKind, OptimizerState};
    use crate::shiftgen::{generate_domain, semantic_domains, source_domain, split_train_val};
    use std::sync::OnceLock;

    struct Fixture {
        net: Network,
        params: ParamStore,
        source_val: SyntheticDataset,
        targets: Vec<SyntheticDataset>,
    }

    /// A small trained model over two semantic target domains. Shared by
    /// the protocol tests; training it once keeps the suite fast.
    fn fixture() -> &'static Fixture {
        static FIXTURE: OnceLock<Fixture> = OnceLock::new();
        FIXTURE.get_or_init(|| {
            let full = generate_domain(&source_domain(77), 12).unwrap();
            let (train, val) = split_train_val(&full, 0.8, 77).unwrap();
            let (net, mut params) = build_model(ModelSpec::desk([3, 32, 32], 10), 77).unwrap();
            let mut opt = OptimizerState::new(OptimizerKind::sgd(0.9), 0.05).unwrap();
            train_source(
                &net,
                &mut params,
                &train.images,
                &train.labels,
                &val.images,
                &val.labels,
                8,
                16,
                &mut opt,
                77,
            )
            .unwrap();
            let sems = semantic_domains(77);
            let targets = vec![
                generate_domain(&sems[1], 6).unwrap(),
                generate_domain(&sems[3], 6).unwrap(),
            ];
            Fixture {
                net,
                params,
                source_val: val,
                targets,
            }
        })
    }

    fn spec_for(kind: ProtocolKind, adapter: AdapterConfig) -> ProtocolSpec {
        let mut spec = ProtocolSpec::new(
            kind,
            vec!["sem_outline".into(), "sem_smoothed".into()],
            adapter,
        );
        spec.batch_size = 20;
        spec.epochs = 3;
        spec.batch_sizes = vec![4, 16];
        spec
    }

    fn run_for<'a>(f: &'a Fixture, spec: &'a ProtocolSpec) -> ProtocolRun<'a> {
        ProtocolRun {
            spec,
            net: &f.net,
            params: &f.params,
            source_val: &f.source_val,
            targets: &f.targets,
        }
    }

    #[test]
    fn source_adapter_never_forgets_and_bookends_match() {
        let f = fixture();
        let spec = spec_for(ProtocolKind::Short, AdapterConfig::source());
        let report = run_for(f, &spec).run_short_term(1).unwrap();
        assert_eq!(report.forget_rates.len(), 1);
        assert_eq!(report.forget_rates[0].value, 0.0);
        let pre = report.stage_accuracy(1, STAGE_SOURCE_PRE).unwrap();
        let post = report.stage_accuracy(1, STAGE_SOURCE_POST).unwrap();
        assert_eq!(pre, post);
        assert_eq!(report.stages.len(), 4);
        assert!((report.mean_accuracy - report.stage_mean()).abs() < 1e-9);
    }

    #[test]
    fn bn_adapter_forget_rate_is_exactly_zero() {
        let f = fixture();
        let spec = spec_for(ProtocolKind::Short, AdapterConfig::bn());
        let report = run_for(f, &spec).run_short_term(2).unwrap();
        assert_eq!(report.forget_rates[0].value, 0.0);
    }

    #[test]
    fn short_runs_are_seed_reproducible() {
        let f = fixture();
        let spec = spec_for(ProtocolKind::Short, AdapterConfig::tent(1e-3));
        let a = run_for(f, &spec).run_short_term(5).unwrap();
        let b = run_for(f, &spec).run_short_term(5).unwrap();
        assert_eq!(a.stages, b.stages);
        assert_eq!(a.forget_rates, b.forget_rates);
        assert_eq!(a.telemetry, b.telemetry);
        let c = run_for(f, &spec).run_short_term(6).unwrap();
        assert!(a.stages != c.stages || a.telemetry != c.telemetry);
    }

    #[test]
    fn long_epoch_one_reproduces_the_short_run() {
        let f = fixture();
        let adapter = AdapterConfig::cotta(1e-2, 0);
        let short_spec = spec_for(ProtocolKind::Short, adapter.clone());
        let long_spec = spec_for(ProtocolKind::Long, adapter);
        let short = run_for(f, &short_spec).run_short_term(9).unwrap();
        let long = run_for(f, &long_spec).run_long_term(9).unwrap();
        for s in short.stages.iter().filter(|s| s.epoch == 1 && s.name != STAGE_SOURCE_POST) {
            let l = long.stage_accuracy(1, &s.name).unwrap();
            assert_eq!(s.accuracy, l, "stage {} drifted", s.name);
        }
        // Epoch-1 telemetry must be identical batch for batch.
        let long_ep1: Vec<&BatchTelemetry> = long.telemetry.iter().filter(|t| t.epoch == 1).collect();
        assert_eq!(short.telemetry.len(), long_ep1.len());
        for (a, b) in short.telemetry.iter().zip(long_ep1) {
            assert_eq!(a, b);
        }
        // Epoch 1's post-source stage also matches the short run's: the
        // adapter state after one identical pass is identical.
        assert_eq!(
            short.stage_accuracy(1, STAGE_SOURCE_POST).unwrap(),
            long.stage_accuracy(1, STAGE_SOURCE_POST).unwrap()
        );
    }

    #[test]
    fn stateless_adapter_repeats_target_means_across_epochs() {
        let f = fixture();
        let spec = spec_for(ProtocolKind::Long, AdapterConfig::source());
        let report = run_for(f, &spec).run_long_term(3).unwrap();
        let per_epoch = report.target_mean_by_epoch();
        assert_eq!(per_epoch.len(), 3);
        // Same shuffles per epoch would make this trivial; epoch seeds
        // differ, so equality here comes from statelessness plus the fact
        // that accuracy over a full pass is order-invariant.
        assert_eq!(per_epoch[0].1, per_epoch[1].1);
        assert_eq!(per_epoch[1].1, per_epoch[2].1);
        for fr in &report.forget_rates {
            assert_eq!(fr.value, 0.0);
        }
    }

    #[test]
    fn long_reports_have_one_pre_and_per_epoch_posts() {
        let f = fixture();
        let spec = spec_for(ProtocolKind::Long, AdapterConfig::bn());
        let report = run_for(f, &spec).run_long_term(4).unwrap();
        let pres = report.stages.iter().filter(|s| s.name == STAGE_SOURCE_PRE).count();
        let posts = report.stages.iter().filter(|s| s.name == STAGE_SOURCE_POST).count();
        assert_eq!(pres, 1);
        assert_eq!(posts, 3);
        assert_eq!(report.forget_rates.len(), 3);
        // 1 pre + 3 epochs x (2 targets + 1 post)
        assert_eq!(report.stages.len(), 1 + 3 * 3);
    }

    #[test]
    fn sweep_reports_gains_per_domain_and_curve_over_targets() {
        let f = fixture();
        let spec = spec_for(ProtocolKind::Sweep, AdapterConfig::bn());
        let report = run_for(f, &spec).run_batch_sweep(4).unwrap();
        // 2 batch sizes x (2 targets + source_val)
        assert_eq!(report.rows.len(), 6);
        assert_eq!(report.curve.len(), 2);
        for row in &report.rows {
            assert!((row.gain - (row.bn_accuracy - row.source_accuracy)).abs() < 1e-12);
        }
        assert!(report.rows.iter().any(|r| r.domain_id == SWEEP_SOURCE_VAL));
        for (b, g) in &report.curve {
            let mean: f64 = report
                .rows
                .iter()
                .filter(|r| r.batch_size == *b && r.domain_id != SWEEP_SOURCE_VAL)
                .map(|r| r.gain)
                .sum::<f64>()
                / 2.0;
            assert!((g - mean).abs() < 1e-12);
        }
    }

    #[test]
    fn oversized_sweep_batch_is_rejected() {
        let f = fixture();
        let mut spec = spec_for(ProtocolKind::Sweep, AdapterConfig::bn());
        spec.batch_sizes = vec![4, 600];
        let err = run_for(f, &spec).run_batch_sweep(0).unwrap_err();
        assert!(err.to_string().contains("smallest target domain"), "{err}");
    }

    #[test]
    fn overlapping_source_and_target_ids_are_rejected() {
        let f = fixture();
        let mut spec = spec_for(ProtocolKind::Short, AdapterConfig::source());
        spec.target_domains.push("source".into());
        let err = run_for(f, &spec).run_short_term(0).unwrap_err();
        assert!(err.to_string().contains("disjoint"), "{err}");
    }

    #[test]
    fn mismatched_target_datasets_are_rejected() {
        let f = fixture();
        let mut spec = spec_for(ProtocolKind::Short, AdapterConfig::source());
        spec.target_domains.reverse();
        let err = run_for(f, &spec).run_short_term(0).unwrap_err();
        assert!(err.to_string().contains("do not match"), "{err}");
    }

    #[test]
    fn learning_adapters_change_state_only_in_target_stages() {
        let f = fixture();
        let spec = spec_for(ProtocolKind::Short, AdapterConfig::tent(1e-3));
        let run = run_for(f, &spec);
        let mut adapter = run.build_adapter(11).unwrap();
        let before = adapter.student().clone();
        let all_roles = [
            ParamRole::BnAffine,
            ParamRole::BnStat,
            ParamRole::Weight,
            ParamRole::Bias,
        ];
        let seed = derive_seed(11, &[EVAL_SEED_TAG]);
        run.eval_accuracy(&adapter, run.source_val, spec.batch_size, seed).unwrap();
        assert!(adapter.student().bit_identical_for_roles(&before, &all_roles).unwrap());
        let mut telemetry = Vec::new();
        run.adapt_epoch(&mut adapter, 1, 11, &mut telemetry).unwrap();
        let gamma_moved = !adapter
            .student()
            .bit_identical_for_roles(&before, &[ParamRole::BnAffine])
            .unwrap();
        assert!(gamma_moved, "TENT target stages should move bn affine params");
        assert!(!telemetry.is_empty());
    }
}
