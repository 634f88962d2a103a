//! Trains the source classifier on the identity domain and saves a
//! checkpoint.
//!
//! Renders the source dataset, splits off a validation set, runs SGD with
//! momentum, prints the per-epoch history, and round-trips the resulting
//! checkpoint through its binary format.
//!
//! ```text
//! cargo run --release --example train_source
//! ```

use cta::model::{
    build_model, load_checkpoint, save_checkpoint, train_source, Checkpoint, CheckpointMeta,
    ModelSpec, ParamRole,
};
use cta::numerics::{OptimizerKind, OptimizerState};
use cta::shiftgen::{generate_domain, source_domain, split_train_val};

fn main() -> cta::Result<()> {
    let seed = 42;
    let full = generate_domain(&source_domain(seed), 60)?;
    let (train, val) = split_train_val(&full, 0.9, seed)?;
    println!("source dataset: {} train / {} validation samples", train.len(), val.len());

    let spec = ModelSpec::desk([3, 32, 32], 10);
    let (net, mut params) = build_model(spec.clone(), seed)?;
    let mut opt = OptimizerState::new(OptimizerKind::sgd(0.9), 0.05)?;
    let history = train_source(
        &net,
        &mut params,
        &train.images,
        &train.labels,
        &val.images,
        &val.labels,
        12,
        32,
        &mut opt,
        seed,
    )?;
    for e in &history.epochs {
        println!(
            "epoch {:2}: train loss {:.4}, val accuracy {:5.1}%",
            e.epoch,
            e.train_loss,
            100.0 * e.val_accuracy
        );
    }

    let dir = std::env::temp_dir().join("cta-example-train");
    std::fs::create_dir_all(&dir).map_err(|e| cta::CtaError::io(dir.display().to_string(), e))?;
    let path = dir.join("model.ctab");
    let ckpt = Checkpoint {
        spec,
        params,
        metadata: CheckpointMeta {
            seed,
            epochs: history.epochs.len(),
            final_val_accuracy: history.final_val_accuracy,
            source_hash: String::new(),
        },
    };
    save_checkpoint(&path, &ckpt)?;

    let loaded = load_checkpoint(&path)?;
    let roles = [ParamRole::Weight, ParamRole::Bias, ParamRole::BnAffine, ParamRole::BnStat];
    let exact = loaded.params.bit_identical_for_roles(&ckpt.params, &roles)?;
    println!(
        "checkpoint {} ({} tensors) reloads bit-exactly: {exact}",
        path.display(),
        loaded.params.len()
    );
    Ok(())
}
