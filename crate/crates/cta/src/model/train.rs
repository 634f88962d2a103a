//! Source-domain supervised training.

use log::debug;

use crate::error::{CtaError, Result};
use crate::model::network::Network;
use crate::model::params::{optimizer_step, ParamRole, ParamStore};
use crate::numerics::loss::{cross_entropy_of_softmax, one_hot};
use crate::numerics::optim::OptimizerState;
use crate::numerics::tensor::Tensor;
use crate::numerics::StatMode;
use crate::rng::{rng_from, shuffle};

#[derive(Debug, Clone, Copy)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainHistory {
    pub epochs: Vec<EpochStats>,
    /// Validation accuracy of the committed (f32-grid) parameters, i.e.
    /// exactly what a saved checkpoint will reproduce.
    pub final_val_accuracy: f64,
}

/// Minibatch SGD over the labeled source set.
///
/// BN layers run in TrainUpdate mode so running statistics track the source
/// distribution. Gradients update everything except running statistics.
/// The store is quantized to the f32 grid on return, making it directly
/// checkpointable.
#[allow(clippy::too_many_arguments)]
pub fn train_source(
    net: &Network,
    params: &mut ParamStore,
    train_images: &Tensor,
    train_labels: &[usize],
    val_images: &Tensor,
    val_labels: &[usize],
    epochs: usize,
    batch_size: usize,
    opt: &mut OptimizerState,
    seed: u64,
) -> Result<TrainHistory> {
    let n = train_labels.len();
    if n == 0 || val_labels.is_empty() {
        return Err(CtaError::EmptyInput("training data".into()));
    }
    if train_images.shape().first() != Some(&n) {
        return Err(CtaError::shape("train labels", format!("{:?} images", train_images.shape()), n));
    }
    if epochs == 0 {
        return Err(CtaError::invalid("epochs", "must be at least 1"));
    }
    if batch_size < 2 {
        return Err(CtaError::BatchTooSmall { got: batch_size, min: 2 });
    }
    let classes = net.spec().classes;
    if let Some(&bad) = train_labels.iter().chain(val_labels).find(|&&l| l >= classes) {
        return Err(CtaError::invalid("labels", format!("label {bad} outside {classes} classes")));
    }

    let mut history = Vec::with_capacity(epochs);
    let mut order: Vec<usize> = (0..n).collect();
    for epoch in 0..epochs {
        let mut rng = rng_from(seed, &[0x7472_6169, epoch as u64]);
        shuffle(&mut rng, &mut order);
        let mut loss_sum = 0.0;
        let mut counted = 0usize;
        for chunk in order.chunks(batch_size) {
            if chunk.len() < 2 {
                debug!("dropping trailing training batch of {} sample(s)", chunk.len());
                continue;
            }
            let images = train_images.gather_rows(chunk)?;
            let labels: Vec<usize> = chunk.iter().map(|&i| train_labels[i]).collect();
            let targets = one_hot(&labels, classes)?;
            let pass = net.forward(params, &images, StatMode::TrainUpdate)?;
            let (loss, dlogits, _) = cross_entropy_of_softmax(&targets, &pass.logits)?;
            if !loss.is_finite() {
                return Err(CtaError::NonFinite(format!("training loss at epoch {epoch}")));
            }
            let grads = net.backward(params, &pass, &dlogits)?;
            optimizer_step(params, &grads, opt, |r| r != ParamRole::BnStat)?;
            net.commit_stats(params, &pass.stat_updates)?;
            loss_sum += loss * chunk.len() as f64;
            counted += chunk.len();
        }
        let train_loss = loss_sum / counted.max(1) as f64;
        let val_accuracy = net.accuracy(params, val_images, val_labels, StatMode::FrozenSource)?;
        debug!("epoch {epoch}: train loss {train_loss:.4}, val accuracy {val_accuracy:.4}");
        history.push(EpochStats { epoch, train_loss, val_accuracy });
    }
    params.quantize_f32();
    let final_val_accuracy = net.accuracy(params, val_images, val_labels, StatMode::FrozenSource)?;
    Ok(TrainHistory { epochs: history, final_val_accuracy })
}
