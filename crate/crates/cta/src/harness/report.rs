//! Run reports, per-batch telemetry, and aggregation across seeds.
//!
//! All accuracies and gains in reports are percentages (0 to 100), and
//! forget rates are percentage-point differences, matching the layout of
//! published continual-adaptation tables.

use serde::{Deserialize, Serialize};

use crate::error::{CtaError, Result};

/// Accuracy of one evaluation stage. Stage names are domain ids, plus the
/// reserved `source_val_pre` and `source_val_post` bookends.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageScore {
    /// 1-based adaptation epoch; short-term runs use epoch 1.
    pub epoch: usize,
    /// Position in the canonical stage list: 0 is the pre bookend,
    /// 1..=T the targets, T+1 the post bookend.
    pub index: usize,
    pub name: String,
    pub accuracy: f64,
}

pub const STAGE_SOURCE_PRE: &str = "source_val_pre";
pub const STAGE_SOURCE_POST: &str = "source_val_post";

/// One adaptation batch as observed by the harness.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchTelemetry {
    pub epoch: usize,
    pub domain_id: String,
    pub batch_index: usize,
    pub mean_entropy: f64,
    pub batch_accuracy: f64,
}

/// Per-epoch forgetting: pre-adaptation source accuracy minus the source
/// accuracy measured after that epoch, in percentage points.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForgetRate {
    pub epoch: usize,
    pub value: f64,
}

/// Everything one protocol run produces for one seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub adapter: String,
    pub seed: u64,
    pub stages: Vec<StageScore>,
    /// Arithmetic mean over every stage row, including both source
    /// bookends. This is the table "Mean" column convention.
    pub mean_accuracy: f64,
    pub forget_rates: Vec<ForgetRate>,
    pub telemetry: Vec<BatchTelemetry>,
    pub wall_clock_secs: f64,
}

impl RunReport {
    /// Recomputes the mean over all stages; `mean_accuracy` must equal this.
    pub fn stage_mean(&self) -> f64 {
        if self.stages.is_empty() {
            return 0.0;
        }
        self.stages.iter().map(|s| s.accuracy).sum::<f64>() / self.stages.len() as f64
    }

    /// Mean accuracy over the target stages of each epoch, bookends
    /// excluded, in epoch order.
    pub fn target_mean_by_epoch(&self) -> Vec<(usize, f64)> {
        let mut out: Vec<(usize, f64, usize)> = Vec::new();
        for s in &self.stages {
            if s.name == STAGE_SOURCE_PRE || s.name == STAGE_SOURCE_POST {
                continue;
            }
            match out.iter_mut().find(|(e, _, _)| *e == s.epoch) {
                Some((_, sum, n)) => {
                    *sum += s.accuracy;
                    *n += 1;
                }
                None => out.push((s.epoch, s.accuracy, 1)),
            }
        }
        out.into_iter().map(|(e, sum, n)| (e, sum / n as f64)).collect()
    }

    /// Mean accuracy over target stages of every epoch combined.
    pub fn target_mean(&self) -> f64 {
        let per_epoch = self.target_mean_by_epoch();
        if per_epoch.is_empty() {
            return 0.0;
        }
        per_epoch.iter().map(|(_, m)| m).sum::<f64>() / per_epoch.len() as f64
    }

    pub fn stage_accuracy(&self, epoch: usize, name: &str) -> Option<f64> {
        self.stages
            .iter()
            .find(|s| s.epoch == epoch && s.name == name)
            .map(|s| s.accuracy)
    }
}

/// Mean and population standard deviation of one stage across seeds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateStage {
    pub epoch: usize,
    pub index: usize,
    pub name: String,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AggregateReport {
    pub adapter: String,
    pub seeds: Vec<u64>,
    pub stages: Vec<AggregateStage>,
    pub mean_accuracy: f64,
    pub std_mean_accuracy: f64,
    /// Per epoch: (epoch, mean forget, std forget).
    pub forget_rates: Vec<(usize, f64, f64)>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Elementwise mean and population std over seed replicas.
///
/// Every report must come from the same adapter and share an identical
/// stage structure; the aggregate is invariant to report order.
pub fn aggregate_seeds(reports: &[RunReport]) -> Result<AggregateReport> {
    let first = reports
        .first()
        .ok_or_else(|| CtaError::EmptyInput("aggregate_seeds report list".into()))?;
    for r in reports {
        if r.adapter != first.adapter {
            return Err(CtaError::Protocol(format!(
                "aggregate_seeds mixes adapters '{}' and '{}'",
                first.adapter, r.adapter
            )));
        }
        let same_stages = r.stages.len() == first.stages.len()
            && r.stages
                .iter()
                .zip(&first.stages)
                .all(|(a, b)| a.epoch == b.epoch && a.index == b.index && a.name == b.name);
        if !same_stages {
            return Err(CtaError::Protocol(format!(
                "aggregate_seeds stage structure of seed {} does not match seed {}",
                r.seed, first.seed
            )));
        }
        let same_forgets = r.forget_rates.len() == first.forget_rates.len()
            && r.forget_rates
                .iter()
                .zip(&first.forget_rates)
                .all(|(a, b)| a.epoch == b.epoch);
        if !same_forgets {
            return Err(CtaError::Protocol(format!(
                "aggregate_seeds forget-rate epochs of seed {} do not match seed {}",
                r.seed, first.seed
            )));
        }
    }
    let stages = first
        .stages
        .iter()
        .enumerate()
        .map(|(i, s)| {
            let vals: Vec<f64> = reports.iter().map(|r| r.stages[i].accuracy).collect();
            let (mean, std) = mean_std(&vals);
            AggregateStage {
                epoch: s.epoch,
                index: s.index,
                name: s.name.clone(),
                mean_accuracy: mean,
                std_accuracy: std,
            }
        })
        .collect();
    let forget_rates = first
        .forget_rates
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let vals: Vec<f64> = reports.iter().map(|r| r.forget_rates[i].value).collect();
            let (mean, std) = mean_std(&vals);
            (f.epoch, mean, std)
        })
        .collect();
    let means: Vec<f64> = reports.iter().map(|r| r.mean_accuracy).collect();
    let (mean_accuracy, std_mean_accuracy) = mean_std(&means);
    Ok(AggregateReport {
        adapter: first.adapter.clone(),
        seeds: reports.iter().map(|r| r.seed).collect(),
        stages,
        mean_accuracy,
        std_mean_accuracy,
        forget_rates,
    })
}
