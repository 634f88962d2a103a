use cta::adapt::{make_adapter, Adapter, AdapterConfig};
use cta::model::*;
use cta::numerics::{OptimizerKind, OptimizerState};
use cta::shiftgen::*;
use std::time::Instant;

fn eval_adapter(adapter: &Adapter, ds: &SyntheticDataset, batch: usize) -> f64 {
    let mut correct = 0usize;
    let mut total = 0usize;
    let stream = stream_batches(std::slice::from_ref(ds), batch, 999).unwrap();
    for b in stream {
        let out = adapter.infer(&b.images).unwrap();
        correct += out
            .predictions
            .iter()
            .zip(&b.labels)
            .filter(|(p, l)| p == l)
            .count();
        total += b.labels.len();
    }
    correct as f64 / total as f64
}

fn main() {
    let t0 = Instant::now();
    let src_spec = source_domain(42);
    let full = generate_domain(&src_spec, 100).unwrap();
    let (train, val) = split_train_val(&full, 0.9, 42).unwrap();
    println!("data ready at {:?} (train {}, val {})", t0.elapsed(), train.len(), val.len());

    let spec = ModelSpec::desk([3, 32, 32], 10);
    let (net, mut params) = build_model(spec, 7).unwrap();
    let mut opt = OptimizerState::new(OptimizerKind::sgd(0.9), 0.05).unwrap();
    let hist = train_source(
        &net, &mut params,
        &train.images, &train.labels,
        &val.images, &val.labels,
        20, 32,
        &mut opt,
        7,
    ).unwrap();
    for e in &hist.epochs {
        println!("epoch {:2}  loss {:.4}  val {:.4}", e.epoch, e.train_loss, e.val_accuracy);
    }
    println!("final val acc {:.4} at {:?}", hist.final_val_accuracy, t0.elapsed());

    let frozen = make_adapter(&net, &params, AdapterConfig::source()).unwrap();
    let bn = make_adapter(&net, &params, AdapterConfig::bn()).unwrap();
    println!("\n{:16} {:>8} {:>8} {:>8}", "domain", "frozen", "bn", "gain");
    let mut ctx_gains = Vec::new();
    let mut sem_gains = Vec::new();
    for d in contextual_domains(42) {
        let ds = generate_domain(&d, 60).unwrap();
        let f = eval_adapter(&frozen, &ds, 128);
        let b = eval_adapter(&bn, &ds, 128);
        println!("{:16} {:8.4} {:8.4} {:+8.4}", d.id, f, b, b - f);
        ctx_gains.push(b - f);
    }
    for d in semantic_domains(42) {
        let ds = generate_domain(&d, 60).unwrap();
        let f = eval_adapter(&frozen, &ds, 128);
        let b = eval_adapter(&bn, &ds, 128);
        println!("{:16} {:8.4} {:8.4} {:+8.4}", d.id, f, b, b - f);
        sem_gains.push(b - f);
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    println!("\nmean contextual gain {:+.4}", mean(&ctx_gains));
    println!("mean semantic gain   {:+.4}", mean(&sem_gains));
    println!("total {:?}", t0.elapsed());
}
