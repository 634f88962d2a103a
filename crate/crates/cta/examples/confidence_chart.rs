//! Per-sample confidence panels comparing the adaptation methods.
//!
//! After a short adaptation on one contextual domain, a fixed evaluation
//! batch is pushed through every method and the per-class probabilities of
//! a few samples are drawn side by side as SVG bar panels (correct class
//! highlighted), with a CSV of the same numbers.
//!
//! ```text
//! cargo run --release --example confidence_chart
//! ```

use cta::adapt::{make_adapter, AdaptMethod, Adapter, AdapterConfig, COTTA_DEFAULT_LR, TENT_DEFAULT_LR};
use cta::harness::confidence_chart;
use cta::model::{build_model, train_source, ModelSpec};
use cta::numerics::{OptimizerKind, OptimizerState};
use cta::shiftgen::{contextual_domains, generate_domain, source_domain, split_train_val, stream_batches};

fn main() -> cta::Result<()> {
    let master = 42;
    let full = generate_domain(&source_domain(master), 60)?;
    let (train, val) = split_train_val(&full, 0.9, master)?;
    let (net, mut params) = build_model(ModelSpec::desk([3, 32, 32], 10), master)?;
    let mut opt = OptimizerState::new(OptimizerKind::sgd(0.9), 0.05)?;
    train_source(
        &net, &mut params, &train.images, &train.labels, &val.images, &val.labels, 12, 32, &mut opt, master,
    )?;

    let domain = generate_domain(&contextual_domains(master)[0], 40)?;
    println!("inspecting `{}` ({} samples)", domain.domain_id, domain.len());

    let mut adapters: Vec<(String, Adapter)> = Vec::new();
    for method in AdaptMethod::all() {
        let config = match method {
            AdaptMethod::Source => AdapterConfig::source(),
            AdaptMethod::Bn => AdapterConfig::bn(),
            AdaptMethod::Tent => AdapterConfig::tent(TENT_DEFAULT_LR),
            AdaptMethod::Cotta => AdapterConfig::cotta(COTTA_DEFAULT_LR, 0),
        };
        let mut adapter = make_adapter(&net, &params, config)?;
        if matches!(method, AdaptMethod::Tent | AdaptMethod::Cotta) {
            for batch in stream_batches(std::slice::from_ref(&domain), 64, 3)? {
                adapter.step(&batch.images)?;
            }
        }
        adapters.push((method.name().to_string(), adapter));
    }

    let mut eval = stream_batches(std::slice::from_ref(&domain), 64, 9)?;
    let batch = eval.next().expect("domain yields at least one batch");
    let named: Vec<(String, &Adapter)> = adapters.iter().map(|(n, a)| (n.clone(), a)).collect();
    let indices: Vec<usize> = (0..8).collect();
    let (svg, csv) = confidence_chart(&named, &batch.images, &batch.labels, &indices)?;

    let dir = std::env::temp_dir().join("cta-example-confidence");
    std::fs::create_dir_all(&dir).map_err(|e| cta::CtaError::io(dir.display().to_string(), e))?;
    let svg_path = dir.join("confidence.svg");
    let csv_path = dir.join("confidence.csv");
    std::fs::write(&svg_path, &svg).map_err(|e| cta::CtaError::io(svg_path.display().to_string(), e))?;
    std::fs::write(&csv_path, &csv).map_err(|e| cta::CtaError::io(csv_path.display().to_string(), e))?;
    println!("chart:  {} ({} bytes)", svg_path.display(), svg.len());
    println!("values: {} ({} rows)", csv_path.display(), csv.lines().count().saturating_sub(1));
    Ok(())
}
