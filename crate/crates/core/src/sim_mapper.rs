//! Similarity mapping: a ridge-regularized linear map from prompt
//! similarities to one-hot class targets.
//!
//! Given the `N x K` similarity matrix `L` of the support set and the `N x C`
//! one-hot targets `Y`, the weights minimize
//!
//! ```text
//! ||Y - L W||_F^2 + lambda ||W||_F^2
//! ```
//!
//! whose unique stationary point (for `lambda > 0`) is
//! `W = (LᵀL + lambda I_K)^-1 Lᵀ Y`. Note the `Lᵀ` factor: writing the
//! solution as `(LᵀL + lambda I)^-1 Y` does not type-check, since the
//! inverse is `K x K` and `Y` is `N x C`.
//!
//! When `N < K` the same solution is obtained from the `N x N` system
//! `W = Lᵀ (L Lᵀ + lambda I_N)^-1 Y`, which [`SolvePath::Auto`] prefers.

use log::warn;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg::{self, Cholesky};
use crate::matrixio::{DenseMatrix, LabelVector};
use crate::similarity::SimilarityMatrix;

pub const DEFAULT_LAMBDA: f64 = 1.0;
/// Diagonal boost for a singular `lambda = 0` system, relative to `trace/K`.
pub const DEFAULT_JITTER: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum SolvePath {
    /// Dual form when `N < K` and `lambda > 0`, primal otherwise.
    #[default]
    Auto,
    /// Factor the `K x K` normal matrix `LᵀL + lambda I`.
    Primal,
    /// Factor the `N x N` kernel matrix `L Lᵀ + lambda I`; needs `lambda > 0`.
    Dual,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SolverConfig {
    pub lambda: f64,
    pub jitter: f64,
    pub path: SolvePath,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: DEFAULT_LAMBDA,
            jitter: DEFAULT_JITTER,
            path: SolvePath::Auto,
        }
    }
}

impl SolverConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "lambda must be finite and non-negative, got {}",
                self.lambda
            )));
        }
        if !(self.jitter >= 0.0 && self.jitter.is_finite()) {
            return Err(Error::InvalidConfig(format!(
                "jitter must be finite and non-negative, got {}",
                self.jitter
            )));
        }
        if self.path == SolvePath::Dual && self.lambda == 0.0 {
            return Err(Error::InvalidConfig(
                "the dual solve path needs lambda > 0".into(),
            ));
        }
        Ok(())
    }
}

/// Learned `K x C` weights.
#[derive(Clone, Debug, PartialEq)]
pub struct MappingModel {
    weights: DenseMatrix<f64>,
    lambda: f64,
    jitter_applied: f64,
    prompt_names: Option<Vec<String>>,
}

impl MappingModel {
    pub fn new(
        weights: DenseMatrix<f64>,
        lambda: f64,
        prompt_names: Option<Vec<String>>,
    ) -> Result<Self> {
        weights.ensure_finite()?;
        if let Some(names) = &prompt_names {
            if names.len() != weights.rows() {
                return Err(Error::DimensionMismatch(format!(
                    "{} prompt names for {} weight rows",
                    names.len(),
                    weights.rows()
                )));
            }
        }
        Ok(Self {
            weights,
            lambda,
            jitter_applied: 0.0,
            prompt_names,
        })
    }

    pub fn weights(&self) -> &DenseMatrix<f64> {
        &self.weights
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn with_jitter_applied(mut self, jitter: f64) -> Self {
        self.jitter_applied = jitter;
        self
    }

    /// Diagonal boost that was needed to factor a singular system (0 if none).
    pub fn jitter_applied(&self) -> f64 {
        self.jitter_applied
    }

    pub fn num_prompts(&self) -> usize {
        self.weights.rows()
    }

    pub fn num_classes(&self) -> usize {
        self.weights.cols()
    }

    pub fn prompt_names(&self) -> Option<&[String]> {
        self.prompt_names.as_deref()
    }
}

/// Test-time class scores, one row per item.
#[derive(Clone, Debug, PartialEq)]
pub struct ScoreMatrix(DenseMatrix<f64>);

impl ScoreMatrix {
    pub fn new(matrix: DenseMatrix<f64>) -> Result<Self> {
        matrix.ensure_finite()?;
        Ok(Self(matrix))
    }

    pub fn matrix(&self) -> &DenseMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DenseMatrix<f64> {
        self.0
    }
}

pub fn one_hot(labels: &LabelVector) -> DenseMatrix<f64> {
    let c = labels.num_classes();
    let mut y = DenseMatrix::zeros(labels.len(), c);
    for (j, &l) in labels.as_slice().iter().enumerate() {
        y.set(j, l, 1.0);
    }
    y
}

pub fn fit(
    train_sims: &SimilarityMatrix,
    labels: &LabelVector,
    config: &SolverConfig,
) -> Result<MappingModel> {
    fit_with(train_sims, labels, config, Exec::default())
}

pub fn fit_with(
    train_sims: &SimilarityMatrix,
    labels: &LabelVector,
    config: &SolverConfig,
    exec: Exec,
) -> Result<MappingModel> {
    config.validate()?;
    let l = train_sims.matrix();
    let (n, k) = l.shape();
    if n != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{n} similarity rows for {} labels",
            labels.len()
        )));
    }
    if n == 0 || k == 0 {
        return Err(Error::EmptyMatrix { rows: n, cols: k });
    }
    labels.require_all_classes()?;
    let y = one_hot(labels);
    let lambda = config.lambda;

    let dual = match config.path {
        SolvePath::Auto => lambda > 0.0 && n < k,
        SolvePath::Primal => false,
        SolvePath::Dual => true,
    };

    let mut jitter_applied = 0.0;
    let weights = if dual {
        let mut kernel = linalg::outer_gram(l, exec);
        linalg::add_diagonal(&mut kernel, lambda);
        let chol =
            Cholesky::factor(kernel, exec).map_err(|e| Error::SingularSystem { pivot: e.0 })?;
        let mut alpha = y;
        chol.solve_in_place(&mut alpha, exec);
        linalg::transpose_mul(l, &alpha, exec)
    } else {
        let mut normal = linalg::gram(l, exec);
        linalg::add_diagonal(&mut normal, lambda);
        let mut rhs = linalg::transpose_mul(l, &y, exec);
        let chol = if lambda == 0.0 {
            match Cholesky::factor(normal.clone(), exec) {
                Ok(c) => c,
                Err(first) => {
                    let jitter = config.jitter * linalg::trace(&normal) / k as f64;
                    if jitter.is_nan() || jitter <= 0.0 {
                        return Err(Error::SingularSystem { pivot: first.0 });
                    }
                    warn!(
                        "normal matrix is rank-deficient (pivot {}); retrying with diagonal jitter {jitter:e}",
                        first.0
                    );
                    linalg::add_diagonal(&mut normal, jitter);
                    jitter_applied = jitter;
                    Cholesky::factor(normal, exec)
                        .map_err(|e| Error::SingularSystem { pivot: e.0 })?
                }
            }
        } else {
            Cholesky::factor(normal, exec).map_err(|e| Error::SingularSystem { pivot: e.0 })?
        };
        chol.solve_in_place(&mut rhs, exec);
        rhs
    };
    if weights.first_non_finite().is_some() {
        return Err(Error::SingularSystem { pivot: 0 });
    }
    Ok(MappingModel::new(
        weights,
        lambda,
        train_sims.prompt_names().map(<[String]>::to_vec),
    )?
    .with_jitter_applied(jitter_applied))
}

pub fn score(model: &MappingModel, test_sims: &SimilarityMatrix) -> Result<ScoreMatrix> {
    score_with(model, test_sims, Exec::default())
}

/// `s[i][c] = sum_k w[k][c] * l[i][k]`.
pub fn score_with(
    model: &MappingModel,
    test_sims: &SimilarityMatrix,
    exec: Exec,
) -> Result<ScoreMatrix> {
    if test_sims.num_prompts() != model.num_prompts() {
        return Err(Error::DimensionMismatch(format!(
            "test similarities have {} prompts, model expects {}",
            test_sims.num_prompts(),
            model.num_prompts()
        )));
    }
    ScoreMatrix::new(linalg::mul(test_sims.matrix(), model.weights(), exec))
}

/// Row-wise argmax; ties go to the lowest class index.
pub fn predict(scores: &ScoreMatrix) -> LabelVector {
    let m = scores.matrix();
    let labels = m.row_iter().map(argmax).collect();
    LabelVector::new(labels, m.cols()).expect("argmax is within the column range")
}

pub(crate) fn argmax<T: PartialOrd + Copy>(row: &[T]) -> usize {
    let mut best = 0;
    for (j, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = j;
        }
    }
    best
}
