//! Datasets, mini-batches, and the overlap-aware partitioner.

mod idx;
mod partition;
mod synthetic;

pub use idx::{encode_idx_images, encode_idx_labels, load_idx, parse_idx_images, parse_idx_labels};
pub use partition::{next_batch, partition, PartitionPlan};
pub use synthetic::make_synthetic;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Provenance {
    Synthetic,
    IdxFile,
}

/// `n` labeled samples stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    inputs: Vec<T>,
    dim: usize,
    labels: Vec<usize>,
    classes: usize,
    provenance: Provenance,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(
        inputs: Vec<T>,
        dim: usize,
        labels: Vec<usize>,
        classes: usize,
        provenance: Provenance,
    ) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Config("dataset must hold at least one sample".into()));
        }
        if dim == 0 {
            return Err(Error::Config("feature dimension must be positive".into()));
        }
        if inputs.len() != labels.len() * dim {
            return Err(Error::Consistency(format!(
                "{} labels imply {} feature values, found {}",
                labels.len(),
                labels.len() * dim,
                inputs.len()
            )));
        }
        if let Some(&bad) = labels.iter().find(|&&y| y >= classes) {
            return Err(Error::Consistency(format!(
                "label {bad} outside class range 0..{classes}"
            )));
        }
        Ok(Self {
            inputs,
            dim,
            labels,
            classes,
            provenance,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn provenance(&self) -> Provenance {
        self.provenance
    }

    pub fn inputs(&self) -> &[T] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    /// Copies the listed samples, in order, into a batch.
    pub fn gather(&self, indices: &[usize]) -> Result<Batch<T>> {
        let mut inputs = Vec::with_capacity(indices.len() * self.dim);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            if i >= self.len() {
                return Err(Error::Config(format!(
                    "sample index {i} out of range for dataset of {}",
                    self.len()
                )));
            }
            inputs.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Batch::new(inputs, self.dim, labels)
    }

    /// The whole dataset as one batch.
    pub fn as_batch(&self) -> Batch<T> {
        Batch {
            inputs: self.inputs.clone(),
            dim: self.dim,
            labels: self.labels.clone(),
        }
    }

    /// The first `n` samples (or all, if fewer).
    pub fn truncated(&self, n: usize) -> Self {
        let n = n.clamp(1, self.len());
        Self {
            inputs: self.inputs[..n * self.dim].to_vec(),
            dim: self.dim,
            labels: self.labels[..n].to_vec(),
            classes: self.classes,
            provenance: self.provenance,
        }
    }
}

/// `m` rows of features and their labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch<T> {
    inputs: Vec<T>,
    dim: usize,
    labels: Vec<usize>,
}

impl<T: Scalar> Batch<T> {
    pub fn new(inputs: Vec<T>, dim: usize, labels: Vec<usize>) -> Result<Self> {
        if labels.is_empty() {
            return Err(Error::Config("batch must hold at least one sample".into()));
        }
        if inputs.len() != labels.len() * dim {
            return Err(Error::shape(
                format!("{} x {} inputs", labels.len(), dim),
                format!("{} values", inputs.len()),
            ));
        }
        Ok(Self { inputs, dim, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn inputs(&self) -> &[T] {
        &self.inputs
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[T] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }
}
