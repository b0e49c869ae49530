//! Unit-sphere normalization and image-to-prompt similarity matrices.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::matrixio::{row_norm, DenseMatrix, EmbeddingMatrix};

/// Rows whose norm falls below this cannot be normalized.
pub const MIN_NORM: f64 = 1e-12;

/// `N x K` matrix of dot products between unit-norm image features (rows)
/// and unit-norm prompt embeddings (columns).
#[derive(Clone, Debug, PartialEq)]
pub struct SimilarityMatrix {
    matrix: DenseMatrix<f32>,
    image_names: Option<Vec<String>>,
    prompt_names: Option<Vec<String>>,
}

impl SimilarityMatrix {
    pub fn new(
        matrix: DenseMatrix<f32>,
        image_names: Option<Vec<String>>,
        prompt_names: Option<Vec<String>>,
    ) -> Result<Self> {
        matrix.ensure_finite()?;
        let check = |names: &Option<Vec<String>>, expected: usize, what: &str| match names {
            Some(n) if n.len() != expected => Err(Error::DimensionMismatch(format!(
                "{} {what} names for {expected} {what}s",
                n.len()
            ))),
            _ => Ok(()),
        };
        check(&image_names, matrix.rows(), "image")?;
        check(&prompt_names, matrix.cols(), "prompt")?;
        Ok(Self {
            matrix,
            image_names,
            prompt_names,
        })
    }

    /// Wraps a bare score matrix without names.
    pub fn from_matrix(matrix: DenseMatrix<f32>) -> Result<Self> {
        Self::new(matrix, None, None)
    }

    pub fn matrix(&self) -> &DenseMatrix<f32> {
        &self.matrix
    }

    pub fn num_images(&self) -> usize {
        self.matrix.rows()
    }

    pub fn num_prompts(&self) -> usize {
        self.matrix.cols()
    }

    pub fn image_names(&self) -> Option<&[String]> {
        self.image_names.as_deref()
    }

    pub fn prompt_names(&self) -> Option<&[String]> {
        self.prompt_names.as_deref()
    }

    pub fn with_prompt_names(mut self, names: Option<Vec<String>>) -> Result<Self> {
        self.prompt_names = names;
        Self::new(self.matrix, self.image_names, self.prompt_names)
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        Self {
            matrix: self.matrix.select_rows(indices),
            image_names: self
                .image_names
                .as_ref()
                .map(|n| indices.iter().map(|&i| n[i].clone()).collect()),
            prompt_names: self.prompt_names.clone(),
        }
    }

    /// Stored as VFEB rows; prompt names are not part of that layout.
    pub fn to_embedding(&self) -> EmbeddingMatrix {
        EmbeddingMatrix::new(self.matrix.clone(), self.image_names.clone(), false)
            .expect("similarity matrix entries are finite")
    }

    pub fn from_embedding(m: EmbeddingMatrix) -> Result<Self> {
        let (matrix, names, _) = m.into_parts();
        Self::new(matrix, names, None)
    }
}

/// Scales every row to unit L2 norm.
pub fn l2_normalize(m: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    let mut out = m.matrix().clone();
    for i in 0..out.rows() {
        let row = out.row_mut(i);
        let norm = row_norm(row);
        if norm < MIN_NORM {
            return Err(Error::ZeroNormRow(i));
        }
        for v in row.iter_mut() {
            *v = (*v as f64 / norm) as f32;
        }
    }
    EmbeddingMatrix::new(out, m.names().map(<[String]>::to_vec), true)
}

pub fn similarity_matrix(
    images: &EmbeddingMatrix,
    prompts: &EmbeddingMatrix,
) -> Result<SimilarityMatrix> {
    similarity_matrix_with(images, prompts, Exec::default())
}

/// Entry `(i, k)` is `dot(images[i], prompts[k])`, accumulated in f64.
pub fn similarity_matrix_with(
    images: &EmbeddingMatrix,
    prompts: &EmbeddingMatrix,
    exec: Exec,
) -> Result<SimilarityMatrix> {
    if images.dim() != prompts.dim() {
        return Err(Error::DimensionMismatch(format!(
            "images have dimension {}, prompts {}",
            images.dim(),
            prompts.dim()
        )));
    }
    for m in [images, prompts] {
        if !m.is_normalized() {
            let row = 0;
            let norm = if m.rows() > 0 {
                row_norm(m.row(0))
            } else {
                0.0
            };
            return Err(Error::NotNormalized { row, norm });
        }
    }
    let (n, k) = (images.rows(), prompts.rows());
    let p64 = prompts.matrix().to_f64();
    let mut out = vec![0.0f32; n * k];
    exec.for_each_row(&mut out, k, |i, orow| {
        let f: Vec<f64> = images.row(i).iter().map(|&v| v as f64).collect();
        for (kk, o) in orow.iter_mut().enumerate() {
            *o = crate::linalg::dot(&f, p64.row(kk)) as f32;
        }
    });
    SimilarityMatrix::new(
        DenseMatrix::new(n, k, out)?,
        images.names().map(<[String]>::to_vec),
        prompts.names().map(<[String]>::to_vec),
    )
}
