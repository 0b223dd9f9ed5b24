use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Matrix;

/// Embeddings (one row per sample) with their integer class labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingBatch {
    pub embeddings: Matrix,
    pub labels: Vec<usize>,
}

impl EmbeddingBatch {
    pub fn new(embeddings: Matrix, labels: Vec<usize>) -> Result<Self> {
        if embeddings.rows() != labels.len() {
            return Err(Error::Dimension {
                expected: embeddings.rows(),
                found: labels.len(),
            });
        }
        Ok(EmbeddingBatch { embeddings, labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.embeddings.cols()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        self.embeddings.row(i)
    }

    /// Fails on an empty batch, a width other than `dim`, or a label `>= classes`.
    pub(crate) fn check(&self, dim: usize, classes: usize) -> Result<()> {
        if self.is_empty() {
            return Err(Error::EmptyInput("embedding batch"));
        }
        if self.dim() != dim {
            return Err(Error::Dimension {
                expected: dim,
                found: self.dim(),
            });
        }
        if let Some(&label) = self.labels.iter().find(|&&l| l >= classes) {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        Ok(())
    }
}
