//! One-pass continual adaptation across a contextual domain sequence.
//!
//! Trains a source model, then streams four shifted target domains through
//! each adaptation method exactly once, with source-validation bookends.
//! Prints the per-domain accuracy table: frozen source weights, test-batch
//! normalization (BN), entropy minimization (TENT), and the mean-teacher
//! method (CoTTA), plus each method's forget rate.
//!
//! ```text
//! cargo run --release --example short_term
//! ```

use cta::adapt::{AdaptMethod, AdapterConfig, COTTA_DEFAULT_LR, TENT_DEFAULT_LR};
use cta::harness::{ProtocolKind, ProtocolRun, ProtocolSpec};
use cta::model::{build_model, train_source, ModelSpec};
use cta::numerics::{OptimizerKind, OptimizerState};
use cta::shiftgen::{contextual_domains, generate_domain, source_domain, split_train_val, SyntheticDataset};

fn main() -> cta::Result<()> {
    let master = 42;
    let full = generate_domain(&source_domain(master), 60)?;
    let (train, val) = split_train_val(&full, 0.9, master)?;
    let (net, mut params) = build_model(ModelSpec::desk([3, 32, 32], 10), master)?;
    let mut opt = OptimizerState::new(OptimizerKind::sgd(0.9), 0.05)?;
    let history = train_source(
        &net, &mut params, &train.images, &train.labels, &val.images, &val.labels, 12, 32, &mut opt, master,
    )?;
    println!("source model: {:.1}% validation accuracy", 100.0 * history.final_val_accuracy);

    let targets: Vec<SyntheticDataset> = contextual_domains(master)
        .iter()
        .take(4)
        .map(|spec| generate_domain(spec, 60))
        .collect::<cta::Result<_>>()?;
    let ids: Vec<String> = targets.iter().map(|d| d.domain_id.clone()).collect();

    print!("{:8}", "method");
    print!(" {:>8}", "src-pre");
    for id in &ids {
        print!(" {:>12}", id);
    }
    println!(" {:>8} {:>7} {:>7}", "src-post", "mean", "forget");

    for method in AdaptMethod::all() {
        let adapter = match method {
            AdaptMethod::Source => AdapterConfig::source(),
            AdaptMethod::Bn => AdapterConfig::bn(),
            AdaptMethod::Tent => AdapterConfig::tent(TENT_DEFAULT_LR),
            AdaptMethod::Cotta => AdapterConfig::cotta(COTTA_DEFAULT_LR, 0),
        };
        let mut spec = ProtocolSpec::new(ProtocolKind::Short, ids.clone(), adapter);
        spec.batch_size = 64;
        let run = ProtocolRun { spec: &spec, net: &net, params: &params, source_val: &val, targets: &targets };
        let report = run.run_short_term(0)?;
        print!("{:8}", report.adapter);
        for stage in &report.stages {
            let width = if stage.index == 0 || stage.name.starts_with("source_val") { 8 } else { 12 };
            print!(" {:>width$.1}", stage.accuracy, width = width);
        }
        println!(" {:>7.2} {:>+7.2}", report.mean_accuracy, report.forget_rates[0].value);
    }
    println!("(accuracies in percent; forget = source-validation drop after the pass)");
    Ok(())
}
