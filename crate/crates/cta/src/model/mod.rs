//! Model assembly, training, evaluation, and checkpoint persistence.

pub mod checkpoint;
pub mod network;
pub mod params;
pub mod spec;
pub mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CheckpointMeta, CHECKPOINT_VERSION};
pub use network::{argmax_rows, build_model, ForwardPass, Network, StatUpdate};
pub use params::{optimizer_step, GradStore, ParamRole, ParamStore};
pub use spec::{ActShape, LayerSpec, ModelSpec};
pub use train::{train_source, EpochStats, TrainHistory};
