use cta::adapt::AdapterConfig;
use cta::harness::*;
use cta::model::*;
use cta::numerics::{OptimizerKind, OptimizerState};
use cta::shiftgen::*;
use std::time::Instant;

fn main() {
    let t0 = Instant::now();
    let full = generate_domain(&source_domain(42), 100).unwrap();
    let (train, val) = split_train_val(&full, 0.9, 42).unwrap();
    let (net, mut params) = build_model(ModelSpec::desk([3, 32, 32], 10), 42).unwrap();
    let mut opt = OptimizerState::new(OptimizerKind::sgd(0.9), 0.05).unwrap();
    train_source(&net, &mut params, &train.images, &train.labels, &val.images, &val.labels, 20, 32, &mut opt, 42).unwrap();
    println!("trained at {:?}", t0.elapsed());

    let sem: Vec<SyntheticDataset> = semantic_domains(42).iter().map(|d| generate_domain(d, 150).unwrap()).collect();
    let ctx: Vec<SyntheticDataset> = contextual_domains(42).iter().map(|d| generate_domain(d, 150).unwrap()).collect();
    let sem_ids: Vec<String> = sem.iter().map(|d| d.domain_id.clone()).collect();
    let ctx_ids: Vec<String> = ctx.iter().map(|d| d.domain_id.clone()).collect();

    for (lr, seeds) in [(2e-2, 2u64), (3e-2, 1u64)] {
        let cfg = AdapterConfig::tent(lr);

        let mut lspec = ProtocolSpec::new(ProtocolKind::Long, sem_ids.clone(), cfg.clone());
        lspec.epochs = 10;
        let lrun = ProtocolRun { spec: &lspec, net: &net, params: &params, source_val: &val, targets: &sem };
        for seed in 0..seeds {
            let rep = lrun.run_long_term(seed).unwrap();
            let means: Vec<String> = rep.target_mean_by_epoch().iter().map(|(_, m)| format!("{m:5.1}")).collect();
            let fg: Vec<String> = rep.forget_rates.iter().map(|f| format!("{:+4.1}", f.value)).collect();
            println!("tent lr {lr:5.0e} seed {seed} long acc: {}", means.join(" "));
            println!("tent lr {lr:5.0e} seed {seed} long fgt: {}", fg.join(" "));
        }

        let cspec = ProtocolSpec::new(ProtocolKind::Short, ctx_ids.clone(), cfg.clone());
        let crun = ProtocolRun { spec: &cspec, net: &net, params: &params, source_val: &val, targets: &ctx };
        for seed in 0..seeds {
            let cr = crun.run_short_term(seed).unwrap();
            println!(
                "tent lr {lr:5.0e} seed {seed} ctx short mean {:6.2} fgt {:+5.2}  ({:.0}s)",
                cr.target_mean(),
                cr.forget_rates[0].value,
                t0.elapsed().as_secs()
            );
        }

        let sspec = ProtocolSpec::new(ProtocolKind::Short, sem_ids.clone(), cfg);
        let srun = ProtocolRun { spec: &sspec, net: &net, params: &params, source_val: &val, targets: &sem };
        let sr = srun.run_short_term(0).unwrap();
        println!(
            "tent lr {lr:5.0e} seed 0 sem short mean {:6.2} fgt {:+5.2}",
            sr.target_mean(),
            sr.forget_rates[0].value
        );
    }

    let ccfg = AdapterConfig::cotta(1e-1, 0);
    let cspec = ProtocolSpec::new(ProtocolKind::Short, ctx_ids.clone(), ccfg);
    let crun = ProtocolRun { spec: &cspec, net: &net, params: &params, source_val: &val, targets: &ctx };
    for seed in [0u64, 1] {
        let cr = crun.run_short_term(seed).unwrap();
        println!(
            "cotta lr 1e-1 seed {seed} ctx short mean {:6.2} fgt {:+5.2}  ({:.0}s)",
            cr.target_mean(),
            cr.forget_rates[0].value,
            t0.elapsed().as_secs()
        );
    }
    println!("total {:?}", t0.elapsed());
}
