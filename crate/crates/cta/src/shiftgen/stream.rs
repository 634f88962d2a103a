//! Batched test streams over an ordered sequence of domains.

use crate::error::{CtaError, Result};
use crate::numerics::Tensor;
use crate::rng::{rng_from, shuffle};
use crate::shiftgen::dataset::SyntheticDataset;

/// One test batch. Labels ride along for harness-side accuracy scoring;
/// adapters never see them.
#[derive(Debug, Clone)]
pub struct Batch {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub domain_id: String,
    /// Position of this batch in the emitted stream.
    pub batch_index: usize,
}

const STREAM_SHUFFLE_TAG: u64 = 0x7374_726d;

/// Lazily materialized batch sequence. Batches never span a domain
/// boundary; within a domain, sample order is a seeded shuffle.
#[derive(Debug)]
pub struct BatchStream<'a> {
    domains: &'a [SyntheticDataset],
    /// (domain index, sample indices) per batch, in emission order.
    plan: Vec<(usize, Vec<usize>)>,
    next: usize,
}

impl BatchStream<'_> {
    pub fn num_batches(&self) -> usize {
        self.plan.len()
    }
}

impl Iterator for BatchStream<'_> {
    type Item = Batch;

    fn next(&mut self) -> Option<Batch> {
        let (domain_index, indices) = self.plan.get(self.next)?;
        let ds = &self.domains[*domain_index];
        let batch = Batch {
            images: ds
                .images
                .gather_rows(indices)
                .expect("stream plan indices are in range"),
            labels: indices.iter().map(|&i| ds.labels[i]).collect(),
            domain_id: ds.domain_id.clone(),
            batch_index: self.next,
        };
        self.next += 1;
        Some(batch)
    }
}

impl ExactSizeIterator for BatchStream<'_> {
    fn len(&self) -> usize {
        self.plan.len() - self.next
    }
}

/// Plans a batched pass over `domains` in order.
///
/// Every sample of every domain appears exactly once, except that a
/// trailing remainder of a single sample is dropped (batch statistics need
/// two) and logged. The shuffle within each domain is keyed by
/// (epoch_seed, domain position), so one seed fixes the whole stream.
pub fn stream_batches<'a>(
    domains: &'a [SyntheticDataset],
    batch_size: usize,
    epoch_seed: u64,
) -> Result<BatchStream<'a>> {
    if domains.is_empty() {
        return Err(CtaError::EmptyInput("stream_batches domain list".into()));
    }
    if batch_size < 2 {
        return Err(CtaError::BatchTooSmall { got: batch_size, min: 2 });
    }
    let mut plan = Vec::new();
    for (di, ds) in domains.iter().enumerate() {
        if ds.is_empty() {
            return Err(CtaError::EmptyInput(format!("domain '{}' in stream_batches", ds.domain_id)));
        }
        let mut order: Vec<usize> = (0..ds.len()).collect();
        shuffle(&mut rng_from(epoch_seed, &[STREAM_SHUFFLE_TAG, di as u64]), &mut order);
        for chunk in order.chunks(batch_size) {
            if chunk.len() < 2 {
                log::warn!(
                    "dropping a trailing batch of 1 sample from domain '{}' (batch size {})",
                    ds.domain_id,
                    batch_size
                );
                continue;
            }
            plan.push((di, chunk.to_vec()));
        }
    }
    Ok(BatchStream {
        domains,
        plan,
        next: 0,
    })
}
