use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{FeatureSchema, Features};
use crate::nn::{streams, DenseMatrix, SeededRng};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

/// Rows of features with two binary task labels.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub split: Split,
    pub dense: DenseMatrix,
    /// One id column per sparse feature.
    pub sparse: Vec<Vec<u64>>,
    /// Embedding bucket count per sparse column.
    pub sparse_vocab: Vec<usize>,
    pub user: Option<Vec<u64>>,
    pub user_vocab: Option<usize>,
    pub labels: [Vec<f64>; 2],
    /// Continuous labels before thresholding (synthetic data only).
    pub raw_labels: Option<[Vec<f64>; 2]>,
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.dense.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.len();
        let bad_len = self.sparse.iter().any(|c| c.len() != n)
            || self.labels.iter().any(|l| l.len() != n)
            || self.user.as_ref().is_some_and(|u| u.len() != n)
            || self
                .raw_labels
                .as_ref()
                .is_some_and(|r| r.iter().any(|l| l.len() != n));
        if bad_len || self.sparse.len() != self.sparse_vocab.len() || self.user.is_some() != self.user_vocab.is_some() {
            return Err(Error::shape("dataset columns disagree on row count or vocabulary"));
        }
        if let Some(v) = self.labels.iter().flatten().find(|&&v| v != 0.0 && v != 1.0) {
            return Err(Error::DegenerateLabels(format!("label {v} is not binary")));
        }
        Ok(())
    }

    pub fn schema(&self) -> FeatureSchema {
        FeatureSchema {
            n_dense: self.dense.cols(),
            sparse_vocab: self.sparse_vocab.clone(),
            user_vocab: self.user_vocab,
        }
    }

    /// Model inputs for the given rows.
    pub fn features(&self, rows: &[usize]) -> Features {
        Features {
            dense: self.dense.select_rows(rows),
            sparse: self
                .sparse
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
            user: self.user.as_ref().map(|u| rows.iter().map(|&r| u[r]).collect()),
        }
    }

    pub fn all_features(&self) -> Features {
        let rows: Vec<usize> = (0..self.len()).collect();
        self.features(&rows)
    }

    pub fn batch_labels(&self, rows: &[usize]) -> [Vec<f64>; 2] {
        [0, 1].map(|t| rows.iter().map(|&r| self.labels[t][r]).collect())
    }

    /// Fraction of positive labels per task.
    pub fn positive_rate(&self) -> [f64; 2] {
        [0, 1].map(|t| self.labels[t].iter().sum::<f64>() / self.len().max(1) as f64)
    }
}

/// Row-index batches for one epoch: a seeded shuffle, cut into
/// `batch_size` chunks with a final short batch.
pub fn batch_iter(n_rows: usize, batch_size: usize, seed: u64, epoch: u64) -> Result<Vec<Vec<usize>>> {
    if n_rows == 0 {
        return Err(Error::EmptyDataset);
    }
    if batch_size == 0 {
        return Err(Error::config("batch_size must be at least 1"));
    }
    let mut order: Vec<usize> = (0..n_rows).collect();
    let mut rng = SeededRng::derive(seed, streams::BATCHES, epoch);
    order.shuffle(&mut rng);
    Ok(order.chunks(batch_size).map(<[usize]>::to_vec).collect())
}
