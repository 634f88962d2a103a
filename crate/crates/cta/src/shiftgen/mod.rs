//! Synthetic domain-shift generation: shape rendering, domain tables,
//! datasets, batched streams, and the PGM/PPM disk interface.

pub mod dataset;
pub mod domain;
pub mod pnm;
pub mod render;
pub mod stream;

pub use dataset::{generate_domain, split_train_val, SyntheticDataset};
pub use domain::{
    contextual_domains, semantic_domains, source_domain, ContextualParams, DomainSpec, SemanticStyle,
    ShiftKind,
};
pub use pnm::{decode_pnm, encode_pgm, encode_ppm, export_dataset, ingest_folder, PnmImage};
pub use render::{
    render_sample, shape_mask, CHANNELS, CLASS_NAMES, IMAGE_SIZE, NUM_CLASSES, PIXELS_PER_IMAGE,
};
pub use stream::{stream_batches, Batch, BatchStream};
