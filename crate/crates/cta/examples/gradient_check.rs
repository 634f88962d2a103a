//! Verifies analytic gradients against central finite differences.
//!
//! Three objectives are checked on a desk-scale network: supervised
//! cross-entropy with respect to every learnable parameter, the entropy
//! objective with respect to the normalization scale/shift parameters
//! (the TENT update), and the fixed-target distillation objective with
//! respect to all student parameters (the mean-teacher update).
//!
//! ```text
//! cargo run --release --example gradient_check
//! ```

use cta::adapt::sharpen_rows;
use cta::model::{build_model, ModelSpec, ParamRole, ParamStore};
use cta::numerics::loss::{cross_entropy_of_softmax, entropy_of_softmax, one_hot};
use cta::numerics::{gradient_check, StatMode, Tensor};
use cta::rng::{rng_from, uniform};

fn random_batch(n: usize, seed: u64) -> Tensor {
    let mut rng = rng_from(seed, &[1]);
    let data: Vec<f64> = (0..n * 3 * 8 * 8).map(|_| uniform(&mut rng) * 2.0 - 1.0).collect();
    Tensor::from_vec(&[n, 3, 8, 8], data).unwrap()
}

/// Runs `gradient_check` over the named parameters of `params` with a loss
/// closure, returning the worst relative error.
fn check<F>(params: &ParamStore, names: &[String], loss: F) -> f64
where
    F: Fn(&ParamStore) -> (f64, cta::model::GradStore),
{
    let tensors: Vec<Tensor> = names.iter().map(|n| params.get(n).unwrap().clone()).collect();
    gradient_check(&tensors, 1e-5, 7, |values, _| {
        let mut p = params.clone();
        for (n, v) in names.iter().zip(values) {
            *p.get_mut(n).unwrap() = v.clone();
        }
        let (l, grads) = loss(&p);
        let out = names
            .iter()
            .map(|n| grads.get(n).cloned().unwrap_or_else(|| Tensor::zeros(p.get(n).unwrap().shape())))
            .collect();
        Ok((l, Some(out)))
    })
    .unwrap()
    .max_rel_error
}

fn main() -> cta::Result<()> {
    let spec = ModelSpec::desk([3, 8, 8], 4);
    let (net, params) = build_model(spec, 99)?;
    let x = random_batch(3, 5);

    let all: Vec<String> = params
        .iter()
        .filter(|(_, e)| e.role != ParamRole::BnStat)
        .map(|(n, _)| n.to_string())
        .collect();
    let affine: Vec<String> = params
        .iter()
        .filter(|(_, e)| e.role == ParamRole::BnAffine)
        .map(|(n, _)| n.to_string())
        .collect();

    let target = one_hot(&[0, 1, 2], 4)?;
    let ce = check(&params, &all, |p| {
        let pass = net.forward(p, &x, StatMode::TestBatch).unwrap();
        let (l, dlogits, _) = cross_entropy_of_softmax(&target, &pass.logits).unwrap();
        (l, net.backward(p, &pass, &dlogits).unwrap())
    });
    println!("cross-entropy, all {} learnable tensors: max relative error {ce:.3e}", all.len());

    let ent = check(&params, &affine, |p| {
        let pass = net.forward(p, &x, StatMode::TestBatch).unwrap();
        let (l, dlogits, _) = entropy_of_softmax(&pass.logits).unwrap();
        (l, net.backward(p, &pass, &dlogits).unwrap())
    });
    println!("prediction entropy, {} scale/shift tensors:  max relative error {ent:.3e}", affine.len());

    let teacher_pass = net.forward(&params, &x, StatMode::TestBatch)?;
    let (_, _, q) = entropy_of_softmax(&teacher_pass.logits)?;
    let pseudo = sharpen_rows(&q)?;
    let distill = check(&params, &all, |p| {
        let pass = net.forward(p, &x, StatMode::TestBatch).unwrap();
        let (l, dlogits, _) = cross_entropy_of_softmax(&pseudo, &pass.logits).unwrap();
        (l, net.backward(p, &pass, &dlogits).unwrap())
    });
    println!("teacher distillation, all {} learnable tensors: max relative error {distill:.3e}", all.len());

    let worst = ce.max(ent).max(distill);
    println!("worst case {worst:.3e} (tolerance 1e-4): {}", if worst <= 1e-4 { "ok" } else { "MISMATCH" });
    Ok(())
}
