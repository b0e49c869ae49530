//! Vocabulary-free comparison methods: nearest class centroid, one-to-one
//! frequency label mapping and count-based Bayesian label mapping.

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::linalg;
use crate::matrixio::{DenseMatrix, EmbeddingMatrix, LabelVector, ShotSet};
use crate::sim_mapper::{argmax, ScoreMatrix};
use crate::similarity::{l2_normalize, similarity_matrix_with, SimilarityMatrix};

pub const DEFAULT_SMOOTHING: f64 = 1.0;

/// One unit-norm prototype per class.
#[derive(Clone, Debug, PartialEq)]
pub struct CentroidModel {
    centroids: EmbeddingMatrix,
}

impl CentroidModel {
    pub fn new(centroids: EmbeddingMatrix) -> Result<Self> {
        if !centroids.is_normalized() {
            return Err(Error::NotNormalized {
                row: 0,
                norm: f64::NAN,
            });
        }
        Ok(Self { centroids })
    }

    pub fn centroids(&self) -> &EmbeddingMatrix {
        &self.centroids
    }

    pub fn num_classes(&self) -> usize {
        self.centroids.rows()
    }

    /// Dot products between test features and the centroids.
    pub fn score(&self, features: &EmbeddingMatrix) -> Result<ScoreMatrix> {
        self.score_with(features, Exec::default())
    }

    pub fn score_with(&self, features: &EmbeddingMatrix, exec: Exec) -> Result<ScoreMatrix> {
        let s = similarity_matrix_with(features, &self.centroids, exec)?;
        ScoreMatrix::new(s.matrix().to_f64())
    }
}

/// The mean of each class's shot features, projected back onto the sphere.
pub fn fit_centroids(features: &EmbeddingMatrix, shots: &ShotSet) -> Result<CentroidModel> {
    if !features.is_normalized() {
        return Err(Error::NotNormalized {
            row: 0,
            norm: f64::NAN,
        });
    }
    class_means(features, shots.indices(), shots.labels())
}

/// Centroids from every labeled row; classes need not be balanced.
pub fn fit_centroids_labeled(
    features: &EmbeddingMatrix,
    labels: &LabelVector,
) -> Result<CentroidModel> {
    if !features.is_normalized() {
        return Err(Error::NotNormalized {
            row: 0,
            norm: f64::NAN,
        });
    }
    if features.rows() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows for {} labels",
            features.rows(),
            labels.len()
        )));
    }
    let all: Vec<usize> = (0..labels.len()).collect();
    class_means(features, &all, labels)
}

fn class_means(
    features: &EmbeddingMatrix,
    indices: &[usize],
    labels: &LabelVector,
) -> Result<CentroidModel> {
    let c = labels.num_classes();
    let d = features.dim();
    let mut sums = vec![0.0f64; c * d];
    let mut counts = vec![0usize; c];
    for (&idx, &label) in indices.iter().zip(labels.as_slice()) {
        if idx >= features.rows() {
            return Err(Error::InvalidShotSet(format!(
                "index {idx} beyond {} feature rows",
                features.rows()
            )));
        }
        counts[label] += 1;
        for (s, &v) in sums[label * d..(label + 1) * d]
            .iter_mut()
            .zip(features.row(idx))
        {
            *s += v as f64;
        }
    }
    if let Some(empty) = counts.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass(empty));
    }
    let mean: Vec<f32> = sums
        .chunks_exact(d)
        .zip(&counts)
        .flat_map(|(row, &n)| row.iter().map(move |s| (s / n as f64) as f32))
        .collect();
    let mean = EmbeddingMatrix::from_matrix(DenseMatrix::new(c, d, mean)?)?;
    let centroids = l2_normalize(&mean).map_err(|e| match e {
        Error::ZeroNormRow(class) => Error::EmptyClass(class),
        other => other,
    })?;
    CentroidModel::new(centroids)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AssignmentKind {
    OneToOne,
    Bayesian,
}

/// Label mapping from prompt similarities to target classes.
#[derive(Clone, Debug, PartialEq)]
pub enum AssignmentModel {
    /// Class `c` is represented by prompt `mapping[c]`; prompts are distinct.
    OneToOne {
        mapping: Vec<usize>,
        num_prompts: usize,
    },
    /// `K x C` conditional-probability weights.
    Bayesian {
        weights: DenseMatrix<f64>,
        smoothing: f64,
    },
}

impl AssignmentModel {
    pub fn kind(&self) -> AssignmentKind {
        match self {
            AssignmentModel::OneToOne { .. } => AssignmentKind::OneToOne,
            AssignmentModel::Bayesian { .. } => AssignmentKind::Bayesian,
        }
    }

    pub fn num_prompts(&self) -> usize {
        match self {
            AssignmentModel::OneToOne { num_prompts, .. } => *num_prompts,
            AssignmentModel::Bayesian { weights, .. } => weights.rows(),
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            AssignmentModel::OneToOne { mapping, .. } => mapping.len(),
            AssignmentModel::Bayesian { weights, .. } => weights.cols(),
        }
    }

    /// The mapping as a `K x C` matrix: a 0/1 selection matrix for
    /// one-to-one, the conditional weights for Bayesian.
    pub fn weight_matrix(&self) -> DenseMatrix<f64> {
        match self {
            AssignmentModel::OneToOne {
                mapping,
                num_prompts,
            } => {
                let mut w = DenseMatrix::zeros(*num_prompts, mapping.len());
                for (c, &k) in mapping.iter().enumerate() {
                    w.set(k, c, 1.0);
                }
                w
            }
            AssignmentModel::Bayesian { weights, .. } => weights.clone(),
        }
    }

    pub fn score(&self, test_sims: &SimilarityMatrix) -> Result<ScoreMatrix> {
        self.score_with(test_sims, Exec::default())
    }

    pub fn score_with(&self, test_sims: &SimilarityMatrix, exec: Exec) -> Result<ScoreMatrix> {
        if test_sims.num_prompts() != self.num_prompts() {
            return Err(Error::DimensionMismatch(format!(
                "test similarities have {} prompts, mapping expects {}",
                test_sims.num_prompts(),
                self.num_prompts()
            )));
        }
        let l = test_sims.matrix();
        match self {
            AssignmentModel::OneToOne { mapping, .. } => {
                ScoreMatrix::new(l.select_cols(mapping).to_f64())
            }
            AssignmentModel::Bayesian { weights, .. } => {
                ScoreMatrix::new(linalg::mul(l, weights, exec))
            }
        }
    }
}

/// `counts[k][c]`: shots of class `c` whose most similar prompt is `k`.
fn prediction_counts(
    train_sims: &SimilarityMatrix,
    labels: &LabelVector,
) -> Result<Vec<Vec<usize>>> {
    if train_sims.num_images() != labels.len() {
        return Err(Error::DimensionMismatch(format!(
            "{} similarity rows for {} labels",
            train_sims.num_images(),
            labels.len()
        )));
    }
    labels.require_all_classes()?;
    let mut counts = vec![vec![0usize; labels.num_classes()]; train_sims.num_prompts()];
    for (row, &label) in train_sims.matrix().row_iter().zip(labels.as_slice()) {
        counts[argmax(row)][label] += 1;
    }
    Ok(counts)
}

/// One-to-one frequency label mapping with greedy assignment: repeatedly
/// take the (class, prompt) pair with the highest count among unassigned
/// classes and prompts. Ties go to the lower class, then the lower prompt.
pub fn fit_flm(train_sims: &SimilarityMatrix, labels: &LabelVector) -> Result<AssignmentModel> {
    let k = train_sims.num_prompts();
    let c = labels.num_classes();
    if k < c {
        return Err(Error::InsufficientPrompts {
            prompts: k,
            classes: c,
        });
    }
    let counts = prediction_counts(train_sims, labels)?;
    Ok(AssignmentModel::OneToOne {
        mapping: greedy_assignment(&counts, c),
        num_prompts: k,
    })
}

fn greedy_assignment(counts: &[Vec<usize>], num_classes: usize) -> Vec<usize> {
    let k = counts.len();
    let mut mapping = vec![usize::MAX; num_classes];
    let mut prompt_taken = vec![false; k];
    for _ in 0..num_classes {
        let mut best: Option<(usize, usize, usize)> = None;
        for (class, slot) in mapping.iter().enumerate() {
            if *slot != usize::MAX {
                continue;
            }
            for (prompt, row) in counts.iter().enumerate() {
                if prompt_taken[prompt] {
                    continue;
                }
                // strict comparison keeps the earliest (class, prompt) on ties
                if best.is_none_or(|(_, _, n)| row[class] > n) {
                    best = Some((class, prompt, row[class]));
                }
            }
        }
        let (class, prompt, _) = best.expect("K >= C leaves a free prompt");
        mapping[class] = prompt;
        prompt_taken[prompt] = true;
    }
    mapping
}

/// Count-based Bayesian label mapping with additive smoothing:
/// `weight(k, c) = (n(k, c) + s) / (n(k, .) + s * C)`. Rows with no counts
/// and `s = 0` are all zero.
pub fn fit_blm(
    train_sims: &SimilarityMatrix,
    labels: &LabelVector,
    smoothing: f64,
) -> Result<AssignmentModel> {
    if !(smoothing >= 0.0 && smoothing.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "smoothing must be finite and non-negative, got {smoothing}"
        )));
    }
    let counts = prediction_counts(train_sims, labels)?;
    let c = labels.num_classes();
    let mut weights = DenseMatrix::zeros(counts.len(), c);
    for (k, row) in counts.iter().enumerate() {
        let total = row.iter().sum::<usize>() as f64 + smoothing * c as f64;
        if total == 0.0 {
            continue;
        }
        for (class, &n) in row.iter().enumerate() {
            weights.set(k, class, (n as f64 + smoothing) / total);
        }
    }
    Ok(AssignmentModel::Bayesian { weights, smoothing })
}
