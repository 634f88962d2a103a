//! Multi-epoch continual adaptation on the semantic benchmark.
//!
//! Repeats the target cycle for several epochs with within-domain
//! reshuffling and evaluates source accuracy after every epoch through the
//! read-only inference path (the disposable-copy contract). Prints the
//! per-epoch mean target accuracy of entropy minimization (TENT) against
//! the mean-teacher method (CoTTA) and writes an SVG chart of both curves.
//!
//! ```text
//! cargo run --release --example long_term
//! ```

use cta::adapt::{AdapterConfig, COTTA_DEFAULT_LR, TENT_DEFAULT_LR};
use cta::harness::{long_term_chart, ProtocolKind, ProtocolRun, ProtocolSpec, RunReport};
use cta::model::{build_model, train_source, ModelSpec};
use cta::numerics::{OptimizerKind, OptimizerState};
use cta::shiftgen::{generate_domain, semantic_domains, source_domain, split_train_val, SyntheticDataset};

fn main() -> cta::Result<()> {
    let master = 42;
    let epochs = 6;
    let full = generate_domain(&source_domain(master), 60)?;
    let (train, val) = split_train_val(&full, 0.9, master)?;
    let (net, mut params) = build_model(ModelSpec::desk([3, 32, 32], 10), master)?;
    let mut opt = OptimizerState::new(OptimizerKind::sgd(0.9), 0.05)?;
    train_source(
        &net, &mut params, &train.images, &train.labels, &val.images, &val.labels, 12, 32, &mut opt, master,
    )?;

    let targets: Vec<SyntheticDataset> = semantic_domains(master)
        .iter()
        .map(|spec| generate_domain(spec, 80))
        .collect::<cta::Result<_>>()?;
    let ids: Vec<String> = targets.iter().map(|d| d.domain_id.clone()).collect();
    println!("targets: {}", ids.join(", "));

    let mut reports: Vec<RunReport> = Vec::new();
    for adapter in [AdapterConfig::tent(TENT_DEFAULT_LR), AdapterConfig::cotta(COTTA_DEFAULT_LR, 0)] {
        let mut spec = ProtocolSpec::new(ProtocolKind::Long, ids.clone(), adapter);
        spec.batch_size = 64;
        spec.epochs = epochs;
        let run = ProtocolRun { spec: &spec, net: &net, params: &params, source_val: &val, targets: &targets };
        reports.push(run.run_long_term(0)?);
    }

    println!("{:6} {:>6} {:>14} {:>14}", "epoch", "", "tent", "cotta");
    for e in 0..epochs {
        let t = reports[0].target_mean_by_epoch()[e];
        let c = reports[1].target_mean_by_epoch()[e];
        let tf = reports[0].forget_rates[e].value;
        let cf = reports[1].forget_rates[e].value;
        println!("{:6} {:>6} {:8.2} {:+5.1} {:8.2} {:+5.1}", e + 1, "", t.1, tf, c.1, cf);
    }
    println!("(columns per method: mean target accuracy %, forget in points)");

    let curves: Vec<(String, Vec<(usize, f64)>)> = reports
        .iter()
        .map(|r| (r.adapter.clone(), r.target_mean_by_epoch()))
        .collect();
    let svg = long_term_chart("target accuracy by epoch", "accuracy (%)", &curves);
    let path = std::env::temp_dir().join("cta-example-long-term.svg");
    std::fs::write(&path, svg).map_err(|e| cta::CtaError::io(path.display().to_string(), e))?;
    println!("chart written to {}", path.display());
    Ok(())
}
