use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::DenseMatrix;

/// Lookup table for categorical ids; raw ids are reduced modulo the
/// vocabulary size.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    pub name: String,
    pub table: DenseMatrix,
}

impl EmbeddingTable {
    /// Rows drawn uniformly from `±sqrt(6 / (1 + dim))`.
    pub fn new<R: Rng + ?Sized>(name: impl Into<String>, vocab: usize, dim: usize, rng: &mut R) -> Result<Self> {
        if vocab == 0 || dim == 0 {
            return Err(Error::config("embedding vocabulary and dim must be positive"));
        }
        let limit = (6.0 / (1 + dim) as f64).sqrt();
        let data = (0..vocab * dim)
            .map(|_| rng.random_range(-limit..=limit))
            .collect();
        Ok(Self {
            name: name.into(),
            table: DenseMatrix::from_vec(vocab, dim, data)?,
        })
    }

    pub fn vocab(&self) -> usize {
        self.table.rows()
    }

    pub fn dim(&self) -> usize {
        self.table.cols()
    }

    #[inline]
    pub fn bucket(&self, raw: u64) -> usize {
        (raw % self.vocab() as u64) as usize
    }

    pub fn lookup(&self, ids: &[u64]) -> DenseMatrix {
        let rows: Vec<usize> = ids.iter().map(|&id| self.bucket(id)).collect();
        self.table.select_rows(&rows)
    }

    /// Scatter-adds `grad` rows (one per id) into `out`.
    pub fn accumulate_grad(&self, ids: &[u64], grad: &DenseMatrix, out: &mut DenseMatrix) -> Result<()> {
        if grad.shape() != (ids.len(), self.dim()) || out.shape() != self.table.shape() {
            return Err(Error::shape(format!(
                "embedding {} gradient shape {:?}",
                self.name,
                grad.shape()
            )));
        }
        for (r, &id) in ids.iter().enumerate() {
            let b = self.bucket(id);
            for (o, g) in out.row_mut(b).iter_mut().zip(grad.row(r)) {
                *o += g;
            }
        }
        Ok(())
    }
}
