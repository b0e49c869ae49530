use crate::error::{Error, Result};

use super::DenseMatrix;

/// Maximum deviation from 1.0 tolerated for rows flagged as normalized.
pub const NORM_TOLERANCE: f64 = 1e-3;

/// Rows of `d`-dimensional vectors (image features or prompt embeddings)
/// with optional per-row names.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingMatrix {
    matrix: DenseMatrix<f32>,
    names: Option<Vec<String>>,
    normalized: bool,
}

impl EmbeddingMatrix {
    /// Validates finiteness, the name count and, when `normalized` is set,
    /// the unit-norm property of every row.
    pub fn new(
        matrix: DenseMatrix<f32>,
        names: Option<Vec<String>>,
        normalized: bool,
    ) -> Result<Self> {
        matrix.ensure_finite()?;
        if let Some(names) = &names {
            if names.len() != matrix.rows() {
                return Err(Error::NameCountMismatch {
                    rows: matrix.rows(),
                    found: names.len(),
                });
            }
        }
        if normalized {
            for (row, values) in matrix.row_iter().enumerate() {
                let norm = row_norm(values);
                if (norm - 1.0).abs() > NORM_TOLERANCE {
                    return Err(Error::NotNormalized { row, norm });
                }
            }
        }
        Ok(Self {
            matrix,
            names,
            normalized,
        })
    }

    /// Unnamed, unnormalized embeddings.
    pub fn from_matrix(matrix: DenseMatrix<f32>) -> Result<Self> {
        Self::new(matrix, None, false)
    }

    pub fn matrix(&self) -> &DenseMatrix<f32> {
        &self.matrix
    }

    pub fn names(&self) -> Option<&[String]> {
        self.names.as_deref()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn rows(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn row(&self, i: usize) -> &[f32] {
        self.matrix.row(i)
    }

    pub fn with_names(self, names: Option<Vec<String>>) -> Result<Self> {
        Self::new(self.matrix, names, self.normalized)
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            matrix: self.matrix.select_rows(indices),
            names: self
                .names
                .as_ref()
                .map(|n| indices.iter().map(|&i| n[i].clone()).collect()),
            normalized: self.normalized,
        }
    }

    pub fn into_parts(self) -> (DenseMatrix<f32>, Option<Vec<String>>, bool) {
        (self.matrix, self.names, self.normalized)
    }
}

pub(crate) fn row_norm(values: &[f32]) -> f64 {
    values
        .iter()
        .map(|&v| (v as f64) * (v as f64))
        .sum::<f64>()
        .sqrt()
}
