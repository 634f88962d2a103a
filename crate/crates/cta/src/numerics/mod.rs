//! Differentiable primitives: tensors, layers, losses, optimizers, and the
//! finite-difference oracle that keeps the analytic gradients honest.

pub mod batchnorm;
pub mod gradcheck;
pub mod layers;
pub mod loss;
pub mod optim;
pub mod tensor;

pub use batchnorm::{
    batch_stats, batchnorm_apply, bn_backward_batch, bn_backward_frozen, bn_normalize, ema_update,
    BatchNormState, StatMode,
};
pub use gradcheck::{gradient_check, GradCheckReport};
pub use loss::{
    cross_entropy_of_softmax, entropy_of_softmax, log_softmax, one_hot, shannon_entropy, softmax,
    soft_cross_entropy,
};
pub use optim::{OptimizerKind, OptimizerState};
pub use tensor::Tensor;
