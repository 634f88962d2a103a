//! CSV emission for results, telemetry, sweeps, and confidence vectors.
//!
//! Formatting is fixed (six decimal places, `\n` line endings, no
//! quoting) so that identical runs produce byte-identical files.

use crate::harness::protocol::SweepReport;
use crate::harness::report::{AggregateReport, RunReport, STAGE_SOURCE_POST};

fn num(v: f64) -> String {
    format!("{v:.6}")
}

pub const RESULTS_HEADER: &str = "run_id,seed,adapter,stage_index,stage_name,accuracy,forget_rate,epoch";

/// One row per stage. The forget-rate column is populated on the
/// post-source rows, whose epochs define it; other rows leave it empty.
pub fn results_csv(run_id: &str, reports: &[&RunReport]) -> String {
    let mut out = String::from(RESULTS_HEADER);
    out.push('\n');
    for report in reports {
        for s in &report.stages {
            let forget = if s.name == STAGE_SOURCE_POST {
                report
                    .forget_rates
                    .iter()
                    .find(|f| f.epoch == s.epoch)
                    .map(|f| num(f.value))
                    .unwrap_or_default()
            } else {
                String::new()
            };
            out.push_str(&format!(
                "{run_id},{},{},{},{},{},{},{}\n",
                report.seed,
                report.adapter,
                s.index,
                s.name,
                num(s.accuracy),
                forget,
                s.epoch
            ));
        }
    }
    out
}

pub const TELEMETRY_HEADER: &str = "run_id,epoch,domain_id,batch_index,mean_entropy,batch_accuracy";

pub fn telemetry_csv(run_id: &str, reports: &[&RunReport]) -> String {
    let mut out = String::from(TELEMETRY_HEADER);
    out.push('\n');
    for report in reports {
        for t in &report.telemetry {
            out.push_str(&format!(
                "{run_id},{},{},{},{},{}\n",
                t.epoch,
                t.domain_id,
                t.batch_index,
                num(t.mean_entropy),
                num(t.batch_accuracy)
            ));
        }
    }
    out
}

pub const SWEEP_HEADER: &str = "run_id,seed,batch_size,domain_id,source_accuracy,bn_accuracy,gain";

pub fn sweep_csv(run_id: &str, reports: &[&SweepReport]) -> String {
    let mut out = String::from(SWEEP_HEADER);
    out.push('\n');
    for report in reports {
        for r in &report.rows {
            out.push_str(&format!(
                "{run_id},{},{},{},{},{},{}\n",
                report.seed,
                r.batch_size,
                r.domain_id,
                num(r.source_accuracy),
                num(r.bn_accuracy),
                num(r.gain)
            ));
        }
    }
    out
}

pub const AGGREGATE_HEADER: &str =
    "run_id,adapter,seed_count,stage_index,stage_name,epoch,mean_accuracy,std_accuracy";

pub fn aggregate_csv(run_id: &str, aggregates: &[&AggregateReport]) -> String {
    let mut out = String::from(AGGREGATE_HEADER);
    out.push('\n');
    for agg in aggregates {
        for s in &agg.stages {
            out.push_str(&format!(
                "{run_id},{},{},{},{},{},{},{}\n",
                agg.adapter,
                agg.seeds.len(),
                s.index,
                s.name,
                s.epoch,
                num(s.mean_accuracy),
                num(s.std_accuracy)
            ));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::harness::report::{BatchTelemetry, ForgetRate, RunReport, StageScore};

    fn sample_report() -> RunReport {
        RunReport {
            adapter: "tent".into(),
            seed: 7,
            stages: vec![
                StageScore {
                    epoch: 1,
                    index: 0,
                    name: "source_val_pre".into(),
                    accuracy: 100.0,
                },
                StageScore {
                    epoch: 1,
                    index: 1,
                    name: "ctx01_dim".into(),
                    accuracy: 83.333333,
                },
                StageScore {
                    epoch: 1,
                    index: 2,
                    name: "source_val_post".into(),
                    accuracy: 98.5,
                },
            ],
            mean_accuracy: 93.944444,
            forget_rates: vec![ForgetRate { epoch: 1, value: 1.5 }],
            telemetry: vec![BatchTelemetry {
                epoch: 1,
                domain_id: "ctx01_dim".into(),
                batch_index: 0,
                mean_entropy: 0.25,
                batch_accuracy: 87.5,
            }],
            wall_clock_secs: 1.0,
        }
    }

    #[test]
    fn results_rows_carry_forget_only_on_post_stages() {
        let r = sample_report();
        let csv = results_csv("abc123", &[&r]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], RESULTS_HEADER);
        assert_eq!(lines[1], "abc123,7,tent,0,source_val_pre,100.000000,,1");
        assert_eq!(lines[2], "abc123,7,tent,1,ctx01_dim,83.333333,,1");
        assert_eq!(lines[3], "abc123,7,tent,2,source_val_post,98.500000,1.500000,1");
        assert_eq!(lines.len(), 4);
    }

    #[test]
    fn telemetry_rows_match_schema() {
        let r = sample_report();
        let csv = telemetry_csv("abc123", &[&r]);
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines[0], TELEMETRY_HEADER);
        assert_eq!(lines[1], "abc123,1,ctx01_dim,0,0.250000,87.500000");
    }

    #[test]
    fn identical_reports_serialize_identically() {
        let r = sample_report();
        assert_eq!(results_csv("x", &[&r]), results_csv("x", &[&r]));
        assert_eq!(telemetry_csv("x", &[&r]), telemetry_csv("x", &[&r]));
    }
}
