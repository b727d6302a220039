use super::{LabeledImages, OpenSetSplit};
use crate::error::{Error, Result};
use crate::rng::{shuffle, stream_rng, Stream};
use crate::tensor::Tensor;

/// One training batch: images (B, C, H, W) and labels relabelled to [0, N).
#[derive(Clone, Debug)]
pub struct Batch {
    pub images: Tensor,
    pub labels: Vec<usize>,
    /// Positions of the samples in the source dataset.
    pub indices: Vec<usize>,
}

/// Shuffled pass over the known-class samples of a dataset. The order is a
/// function of `(seed, epoch)`; the last batch may be short.
pub struct Batches<'a> {
    data: &'a LabeledImages,
    split: &'a OpenSetSplit,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
}

impl<'a> Batches<'a> {
    pub fn new(
        data: &'a LabeledImages,
        split: &'a OpenSetSplit,
        batch_size: usize,
        seed: u64,
        epoch: u64,
    ) -> Result<Self> {
        if batch_size == 0 {
            return Err(Error::config("batch size must be >= 1"));
        }
        let mut order = data.indices_of(&split.known);
        if order.is_empty() {
            return Err(Error::Data(format!("{} has no known-class samples", data.source)));
        }
        let mut rng = stream_rng(seed, Stream::Shuffle, epoch);
        shuffle(&mut rng, &mut order);
        Ok(Batches {
            data,
            split,
            order,
            pos: 0,
            batch_size,
        })
    }

    pub fn num_samples(&self) -> usize {
        self.order.len()
    }

    pub fn num_batches(&self) -> usize {
        self.order.len().div_ceil(self.batch_size)
    }
}

impl Iterator for Batches<'_> {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let indices = self.order[self.pos..end].to_vec();
        self.pos = end;
        let labels = indices
            .iter()
            .map(|&i| {
                self.split
                    .relabel(self.data.labels[i])
                    .expect("batch order holds known classes only")
            })
            .collect();
        Some(self.data.gather(&indices).map(|images| Batch {
            images,
            labels,
            indices,
        }))
    }
}
