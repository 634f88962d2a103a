//! Batch-size sweep of the normalization-recalibration gain.
//!
//! Test-batch normalization replaces frozen running statistics with the
//! statistics of the batch in hand, so its benefit depends on how well a
//! batch estimates the target distribution. The sweep scores frozen
//! weights against BN at batch sizes 2..256 on contextual targets and
//! reports the gain curve, which rises with batch size and flattens; tiny
//! batches can fall below the frozen baseline.
//!
//! ```text
//! cargo run --release --example batch_sweep
//! ```

use cta::adapt::AdapterConfig;
use cta::harness::{sweep_chart, ProtocolKind, ProtocolRun, ProtocolSpec};
use cta::model::{build_model, train_source, ModelSpec};
use cta::numerics::{OptimizerKind, OptimizerState};
use cta::shiftgen::{contextual_domains, generate_domain, source_domain, split_train_val, SyntheticDataset};

fn main() -> cta::Result<()> {
    let master = 42;
    let full = generate_domain(&source_domain(master), 60)?;
    let (train, val) = split_train_val(&full, 0.9, master)?;
    let (net, mut params) = build_model(ModelSpec::desk([3, 32, 32], 10), master)?;
    let mut opt = OptimizerState::new(OptimizerKind::sgd(0.9), 0.05)?;
    train_source(
        &net, &mut params, &train.images, &train.labels, &val.images, &val.labels, 12, 32, &mut opt, master,
    )?;

    let targets: Vec<SyntheticDataset> = contextual_domains(master)
        .iter()
        .take(4)
        .map(|spec| generate_domain(spec, 30))
        .collect::<cta::Result<_>>()?;
    let ids: Vec<String> = targets.iter().map(|d| d.domain_id.clone()).collect();

    let spec = ProtocolSpec::new(ProtocolKind::Sweep, ids, AdapterConfig::bn());
    let run = ProtocolRun { spec: &spec, net: &net, params: &params, source_val: &val, targets: &targets };
    let report = run.run_batch_sweep(0)?;

    println!("{:>6} {:>10} {:>8} {:>8}", "batch", "source", "bn", "gain");
    for (batch, gain) in &report.curve {
        let source = report
            .rows
            .iter()
            .filter(|r| r.batch_size == *batch && r.domain_id != "source_val")
            .map(|r| r.source_accuracy)
            .sum::<f64>()
            / targets.len() as f64;
        println!("{batch:>6} {source:>10.2} {:>8.2} {:>+8.2}", source + gain, gain);
    }
    println!("(mean over {} contextual domains; gain = bn minus frozen source)", targets.len());

    let curves = vec![("bn gain".to_string(), report.curve.clone())];
    let svg = sweep_chart(&curves);
    let path = std::env::temp_dir().join("cta-example-batch-sweep.svg");
    std::fs::write(&path, svg).map_err(|e| cta::CtaError::io(path.display().to_string(), e))?;
    println!("chart written to {}", path.display());
    Ok(())
}
