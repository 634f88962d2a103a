//! Synthetic class-balanced datasets and the train/val split.

use crate::error::{CtaError, Result};
use crate::numerics::Tensor;
use crate::rng::{rng_from, shuffle};
use crate::shiftgen::domain::DomainSpec;
use crate::shiftgen::render::{render_sample, CHANNELS, IMAGE_SIZE, NUM_CLASSES, PIXELS_PER_IMAGE};

/// A rendered domain: images in [0,1], one label per image.
#[derive(Debug, Clone)]
pub struct SyntheticDataset {
    pub domain_id: String,
    /// Shape [M, 3, 32, 32].
    pub images: Tensor,
    pub labels: Vec<usize>,
}

impl SyntheticDataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Samples per class, indexed by label.
    pub fn class_counts(&self, classes: usize) -> Vec<usize> {
        let mut counts = vec![0usize; classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    fn from_rows(domain_id: String, rows: Tensor, labels: Vec<usize>) -> Self {
        SyntheticDataset {
            domain_id,
            images: rows,
            labels,
        }
    }
}

/// Renders `per_class` samples of each of the ten classes under a domain.
///
/// Samples are laid out class-major: image k has label k / per_class. The
/// output is a pure function of (spec, per_class).
pub fn generate_domain(spec: &DomainSpec, per_class: usize) -> Result<SyntheticDataset> {
    spec.validate()?;
    if per_class == 0 {
        return Err(CtaError::invalid("per_class", "must be at least 1"));
    }
    let total = per_class * NUM_CLASSES;
    let mut images = Tensor::zeros(&[total, CHANNELS, IMAGE_SIZE, IMAGE_SIZE]);
    let mut labels = Vec::with_capacity(total);
    let data = images.data_mut();
    for class in 0..NUM_CLASSES {
        for sample in 0..per_class {
            let k = class * per_class + sample;
            let out = &mut data[k * PIXELS_PER_IMAGE..(k + 1) * PIXELS_PER_IMAGE];
            render_sample(spec, class, sample as u64, out)?;
            labels.push(class);
        }
    }
    Ok(SyntheticDataset {
        domain_id: spec.id.clone(),
        images,
        labels,
    })
}

const SPLIT_STREAM_TAG: u64 = 0x7370_6c69;

/// Class-stratified split into train and validation sets.
///
/// Each class is shuffled with its own seeded stream and cut at
/// floor(fraction * count), clamped so both sides keep at least one sample.
/// The two sides are disjoint and jointly exhaustive. A class with fewer
/// than 2 samples cannot be split and is an error.
pub fn split_train_val(
    dataset: &SyntheticDataset,
    fraction: f64,
    seed: u64,
) -> Result<(SyntheticDataset, SyntheticDataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(CtaError::invalid("fraction", format!("must lie strictly in (0, 1), got {fraction}")));
    }
    if dataset.is_empty() {
        return Err(CtaError::EmptyInput("split_train_val dataset".into()));
    }
    let classes = dataset.labels.iter().max().unwrap() + 1;
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in dataset.labels.iter().enumerate() {
        per_class[l].push(i);
    }
    let mut train_idx = Vec::new();
    let mut val_idx = Vec::new();
    for (class, indices) in per_class.iter_mut().enumerate() {
        if indices.len() < 2 {
            return Err(CtaError::invalid(
                "split_train_val",
                format!("class {class} has {} sample(s); need at least 2 to split", indices.len()),
            ));
        }
        shuffle(&mut rng_from(seed, &[SPLIT_STREAM_TAG, class as u64]), indices);
        let cut = ((fraction * indices.len() as f64).floor() as usize).clamp(1, indices.len() - 1);
        train_idx.extend_from_slice(&indices[..cut]);
        val_idx.extend_from_slice(&indices[cut..]);
    }
    let gather = |idx: &[usize]| -> Result<SyntheticDataset> {
        Ok(SyntheticDataset::from_rows(
            dataset.domain_id.clone(),
            dataset.images.gather_rows(idx)?,
            idx.iter().map(|&i| dataset.labels[i]).collect(),
        ))
    };
    Ok((gather(&train_idx)?, gather(&val_idx)?))
}
