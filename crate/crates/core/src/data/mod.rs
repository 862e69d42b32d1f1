//! Datasets, synthetic tasks, IDX ingestion and non-IID partitioning.

mod idx;
mod partition;
mod synthetic;

pub use idx::{load_idx, parse_idx_images, parse_idx_labels, IdxImages, IMAGE_MAGIC, LABEL_MAGIC};
pub use partition::{dirichlet_partition, local_split, ClientSplit, Partition};
pub use synthetic::synthetic_task;

use ndarray::{Array2, Axis};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Feature matrix (one row per sample) with integer class labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset<T> {
    features: Array2<T>,
    labels: Vec<usize>,
    num_classes: usize,
}

impl<T: Scalar> Dataset<T> {
    pub fn new(features: Array2<T>, labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if features.nrows() == 0 {
            return Err(Error::invalid("dataset has no samples"));
        }
        if features.nrows() != labels.len() {
            return Err(Error::mismatch("dataset labels", features.nrows(), labels.len()));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= num_classes) {
            return Err(Error::invalid(format!("label {bad} outside [0, {num_classes})")));
        }
        Ok(Self {
            features,
            labels,
            num_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_features(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &Array2<T> {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    /// Copy the given rows into a contiguous batch.
    pub fn gather(&self, rows: &[usize]) -> (Array2<T>, Vec<usize>) {
        let x = self.features.select(Axis(0), rows);
        let y = rows.iter().map(|&r| self.labels[r]).collect();
        (x, y)
    }

    /// The first `n` samples (or all of them).
    pub fn truncate(mut self, n: usize) -> Self {
        if n < self.len() {
            self.features = self.features.slice_move(ndarray::s![..n, ..]);
            self.labels.truncate(n);
        }
        self
    }

    pub fn class_counts(&self, rows: &[usize]) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &r in rows {
            counts[self.labels[r]] += 1;
        }
        counts
    }
}
