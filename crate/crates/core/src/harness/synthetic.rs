use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrixio::{DenseMatrix, EmbeddingMatrix, LabelVector};
use crate::similarity::l2_normalize;

use super::sampling::{seeded_rng, SeededRng};

/// Clustered unit vectors around random class means, plus random prompts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub num_classes: usize,
    pub dim: usize,
    pub prompts: usize,
    pub shots: usize,
    pub test_per_class: usize,
    /// Approximate angular standard deviation around the class mean, in
    /// radians. Per-coordinate noise is `spread / sqrt(dim)`.
    pub cluster_spread: f64,
    pub seed: u64,
}

impl SyntheticSpec {
    pub fn items_per_class(&self) -> usize {
        self.shots + self.test_per_class
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.to_string()));
        if self.dim < 2 {
            return bad("synthetic dimension must be at least 2");
        }
        if !(self.cluster_spread > 0.0 && self.cluster_spread.is_finite()) {
            return bad("cluster spread must be positive");
        }
        if self.num_classes == 0 || self.prompts == 0 || self.items_per_class() == 0 {
            return bad("classes, prompts and items per class must be non-zero");
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticData {
    pub features: EmbeddingMatrix,
    pub labels: LabelVector,
    pub prompts: EmbeddingMatrix,
}

/// Draws, in order: the class means, the prompts, then the items of each
/// class (class-major).
pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticData> {
    spec.validate()?;
    let mut rng = seeded_rng(spec.seed);
    let d = spec.dim;
    let means = random_sphere(&mut rng, spec.num_classes, d)?;
    let prompts = random_sphere(&mut rng, spec.prompts, d)?;

    let per_class = spec.items_per_class();
    let sigma = spec.cluster_spread / (d as f64).sqrt();
    let mut data = Vec::with_capacity(spec.num_classes * per_class * d);
    let mut labels = Vec::with_capacity(spec.num_classes * per_class);
    for class in 0..spec.num_classes {
        let mean = means.row(class);
        for _ in 0..per_class {
            data.extend(mean.iter().map(|&m| {
                let z: f64 = rng.sample(StandardNormal);
                (m as f64 + sigma * z) as f32
            }));
            labels.push(class);
        }
    }
    let raw = DenseMatrix::new(labels.len(), d, data)?;
    let features = l2_normalize(&EmbeddingMatrix::from_matrix(raw)?)?;
    Ok(SyntheticData {
        features,
        labels: LabelVector::new(labels, spec.num_classes)?,
        prompts,
    })
}

fn random_sphere(rng: &mut SeededRng, rows: usize, d: usize) -> Result<EmbeddingMatrix> {
    let data = (0..rows * d)
        .map(|_| rng.sample::<f64, _>(StandardNormal) as f32)
        .collect();
    l2_normalize(&EmbeddingMatrix::from_matrix(DenseMatrix::new(
        rows, d, data,
    )?)?)
}
