//! Dataset ingestion, synthetic data, and deterministic batching.
//!
//! All pixel/feature values live in [0, 1]; attack budgets are interpreted
//! in that domain. Datasets are immutable after construction.

mod cifar;
mod synthetic;

pub use cifar::{load_cifar10_binary, write_cifar10_binary, SubsetSpec};
pub use synthetic::{make_synthetic, make_template_images, SyntheticKind, SyntheticSpec, TemplateImageSpec};

use crate::error::{Error, Result};
use crate::rng::{derive_seed, Rng};
use crate::tensor::Tensor;

/// Labeled examples with inputs in [0, 1].
#[derive(Debug, Clone)]
pub struct Dataset {
    pub inputs: Tensor,
    pub labels: Vec<usize>,
    pub num_classes: usize,
}

impl Dataset {
    pub fn new(inputs: Tensor, labels: Vec<usize>, num_classes: usize) -> Result<Dataset> {
        if inputs.shape().is_empty() || inputs.shape()[0] != labels.len() {
            return Err(Error::Contract(format!(
                "inputs {:?} do not match {} labels",
                inputs.shape(),
                labels.len()
            )));
        }
        if let Some(bad) = labels.iter().find(|&&y| y >= num_classes) {
            return Err(Error::Contract(format!(
                "label {bad} out of range for {num_classes} classes"
            )));
        }
        if inputs.data().iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::Contract("input values must lie in [0, 1]".into()));
        }
        Ok(Dataset { inputs, labels, num_classes })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Per-example shape (without the leading batch dimension).
    pub fn example_shape(&self) -> &[usize] {
        &self.inputs.shape()[1..]
    }

    fn example_len(&self) -> usize {
        self.example_shape().iter().product()
    }

    /// Gathers the given rows into a new dataset (indices may repeat).
    pub fn select(&self, indices: &[usize]) -> Result<Dataset> {
        let stride = self.example_len();
        let mut data = Vec::with_capacity(indices.len() * stride);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Contract(format!(
                    "index {i} out of range for {} examples",
                    self.len()
                )));
            }
            data.extend_from_slice(&self.inputs.data()[i * stride..(i + 1) * stride]);
            labels.push(self.labels[i]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(self.example_shape());
        Ok(Dataset {
            inputs: Tensor::new(&shape, data)?,
            labels,
            num_classes: self.num_classes,
        })
    }
}

/// Minibatch plan: size, count, and the shuffle seed.
#[derive(Debug, Clone, Copy)]
pub struct BatchPlan {
    pub batch_size: usize,
    pub seed: u64,
}

impl BatchPlan {
    pub fn new(batch_size: usize, seed: u64) -> Result<BatchPlan> {
        if batch_size == 0 {
            return Err(Error::Contract("batch size must be positive".into()));
        }
        Ok(BatchPlan { batch_size, seed })
    }

    /// The plan for a later epoch: same size, epoch-derived shuffle seed,
    /// so consecutive epochs see different permutations.
    pub fn epoch(&self, epoch: usize) -> BatchPlan {
        BatchPlan {
            batch_size: self.batch_size,
            seed: derive_seed(self.seed, epoch as u64),
        }
    }

    /// K = ceil(N / M).
    pub fn batch_count(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }
}

/// Iterator over one epoch of minibatches. Every example index appears
/// exactly once; the last batch may be smaller.
pub struct Batches<'a> {
    dataset: &'a Dataset,
    order: Vec<usize>,
    batch_size: usize,
    pos: usize,
}

impl Iterator for Batches<'_> {
    type Item = (Tensor, Vec<usize>);

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let slice = &self.order[self.pos..end];
        self.pos = end;
        let batch = self
            .dataset
            .select(slice)
            .expect("batch indices are in range by construction");
        Some((batch.inputs, batch.labels))
    }
}

/// One epoch of shuffled minibatches over `dataset` under `plan`.
pub fn batches<'a>(dataset: &'a Dataset, plan: &BatchPlan) -> Batches<'a> {
    let mut rng = Rng::new(plan.seed);
    let order = rng.permutation(dataset.len());
    Batches {
        dataset,
        order,
        batch_size: plan.batch_size,
        pos: 0,
    }
}
