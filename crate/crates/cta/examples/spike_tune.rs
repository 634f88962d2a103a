use cta::harness::*;
use cta::model::*;
use cta::numerics::{OptimizerKind, OptimizerState};
use cta::shiftgen::*;
use cta::adapt::AdapterConfig;
use std::time::Instant;

fn short(spec_adapter: AdapterConfig, ids: &[String], data: &[SyntheticDataset],
         net: &Network, params: &ParamStore, val: &SyntheticDataset) -> (f64, f64) {
    let spec = ProtocolSpec::new(ProtocolKind::Short, ids.to_vec(), spec_adapter);
    let run = ProtocolRun { spec: &spec, net, params, source_val: val, targets: data };
    let r = run.run_short_term(1).unwrap();
    (r.target_mean(), r.forget_rates[0].value)
}

fn main() {
    let t0 = Instant::now();
    let args: Vec<String> = std::env::args().collect();
    let long_pair: Option<(f64, f64)> = if args.len() >= 3 {
        Some((args[1].parse().unwrap(), args[2].parse().unwrap()))
    } else {
        None
    };

    let full = generate_domain(&source_domain(42), 100).unwrap();
    let (train, val) = split_train_val(&full, 0.9, 42).unwrap();
    let (net, mut params) = build_model(ModelSpec::desk([3, 32, 32], 10), 42).unwrap();
    let mut opt = OptimizerState::new(OptimizerKind::sgd(0.9), 0.05).unwrap();
    let h = train_source(&net, &mut params, &train.images, &train.labels, &val.images, &val.labels, 20, 32, &mut opt, 42).unwrap();
    println!("trained: val {:.4} (n={}) at {:?}", h.final_val_accuracy, val.len(), t0.elapsed());

    let per_class = 150;
    let ctx: Vec<SyntheticDataset> = contextual_domains(42).iter().map(|d| generate_domain(d, per_class).unwrap()).collect();
    let sem: Vec<SyntheticDataset> = semantic_domains(42).iter().map(|d| generate_domain(d, per_class).unwrap()).collect();
    let ctx_ids: Vec<String> = ctx.iter().map(|d| d.domain_id.clone()).collect();
    let sem_ids: Vec<String> = sem.iter().map(|d| d.domain_id.clone()).collect();

    if let Some((tlr, clr)) = long_pair {
        for method in ["source", "bn"] {
            let cfg = if method == "source" { AdapterConfig::source() } else { AdapterConfig::bn() };
            let (cm, cf) = short(cfg.clone(), &ctx_ids, &ctx, &net, &params, &val);
            let (sm, sf) = short(cfg, &sem_ids, &sem, &net, &params, &val);
            println!("{method:6}            ctx {cm:6.2} fgt {cf:+6.2} | sem {sm:6.2} fgt {sf:+6.2}");
        }
        for (method, lr) in [("tent", tlr), ("cotta", clr)] {
            let cfg = if method == "tent" { AdapterConfig::tent(lr) } else { AdapterConfig::cotta(lr, 0) };
            let (cm, cf) = short(cfg.clone(), &ctx_ids, &ctx, &net, &params, &val);
            let (sm, sf) = short(cfg.clone(), &sem_ids, &sem, &net, &params, &val);
            println!("{method:6} lr {lr:7.0e} ctx {cm:6.2} fgt {cf:+6.2} | sem {sm:6.2} fgt {sf:+6.2}");
            let mut spec = ProtocolSpec::new(ProtocolKind::Long, sem_ids.clone(), cfg);
            spec.epochs = 10;
            let run = ProtocolRun { spec: &spec, net: &net, params: &params, source_val: &val, targets: &sem };
            let r = run.run_long_term(1).unwrap();
            let means: Vec<String> = r.target_mean_by_epoch().iter().map(|(_, m)| format!("{m:5.1}")).collect();
            let forgets: Vec<String> = r.forget_rates.iter().map(|f| format!("{:+4.1}", f.value)).collect();
            println!("  long sem acc: {}", means.join(" "));
            println!("  long sem fgt: {}", forgets.join(" "));
        }
    } else {
        for tlr in [2e-3, 5e-3, 1e-2, 2e-2] {
            let (sm, sf) = short(AdapterConfig::tent(tlr), &sem_ids, &sem, &net, &params, &val);
            println!("tent   lr {tlr:7.0e} sem {sm:6.2} fgt {sf:+6.2}  ({:.0}s)", t0.elapsed().as_secs());
        }
        for clr in [2e-2, 5e-2, 1e-1, 2e-1] {
            let (sm, sf) = short(AdapterConfig::cotta(clr, 0), &sem_ids, &sem, &net, &params, &val);
            println!("cotta  lr {clr:7.0e} sem {sm:6.2} fgt {sf:+6.2}  ({:.0}s)", t0.elapsed().as_secs());
        }
    }
    println!("total {:?}", t0.elapsed());
}
