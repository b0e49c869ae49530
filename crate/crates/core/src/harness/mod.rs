//! Seeded few-shot evaluation: sample a support set per seed, fit a method,
//! score the held-out items and aggregate top-1 accuracy.

mod report;
mod sampling;
mod synthetic;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::baselines::{fit_blm, fit_centroids, fit_flm, DEFAULT_SMOOTHING};
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::matrixio::{EmbeddingMatrix, LabelVector};
use crate::sim_mapper::{fit_with, predict, score_with, SolverConfig, DEFAULT_LAMBDA};
use crate::similarity::{similarity_matrix_with, SimilarityMatrix};

pub use report::{emit_report, parse_csv_report, ReportFormat};
pub use sampling::{sample_shots, seeded_rng, SeededRng};
pub use synthetic::{generate_synthetic, SyntheticData, SyntheticSpec};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Sim,
    Centroids,
    #[serde(rename = "flm")]
    OneToOne,
    Blm,
}

impl Method {
    pub const ALL: [Method; 4] = [
        Method::Sim,
        Method::Centroids,
        Method::OneToOne,
        Method::Blm,
    ];

    /// Identifier used on the command line and in CSV reports.
    pub fn id(self) -> &'static str {
        match self {
            Method::Sim => "sim",
            Method::Centroids => "centroids",
            Method::OneToOne => "flm",
            Method::Blm => "blm",
        }
    }

    /// Human-readable name used in markdown tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::Sim => "SiM",
            Method::Centroids => "Centroids",
            Method::OneToOne => "One-to-One",
            Method::Blm => "BLM",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "sim" => Ok(Method::Sim),
            "centroids" => Ok(Method::Centroids),
            "flm" | "one-to-one" | "onetoone" => Ok(Method::OneToOne),
            "blm" => Ok(Method::Blm),
            other => Err(Error::ParseFailure(format!("unknown method {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TaskSpec {
    pub shots_per_class: usize,
    pub seeds: Vec<u64>,
    pub method: Method,
    /// Ridge weight for SiM; defaults to [`DEFAULT_LAMBDA`].
    pub lambda: Option<f64>,
    /// Additive smoothing for BLM; defaults to [`DEFAULT_SMOOTHING`].
    pub smoothing: Option<f64>,
}

impl TaskSpec {
    pub fn new(method: Method, shots_per_class: usize, seeds: Vec<u64>) -> Self {
        Self {
            shots_per_class,
            seeds,
            method,
            lambda: None,
            smoothing: None,
        }
    }

    fn validate(&self) -> Result<()> {
        if self.shots_per_class == 0 {
            return Err(Error::InvalidConfig(
                "shots_per_class must be at least 1".into(),
            ));
        }
        if self.seeds.is_empty() {
            return Err(Error::InvalidConfig("at least one seed is required".into()));
        }
        let mut sorted = self.seeds.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig("seeds must be distinct".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SeedAccuracy {
    pub seed: u64,
    pub accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub dataset: String,
    pub method: Method,
    pub shots: usize,
    /// Sorted by seed.
    pub per_seed: Vec<SeedAccuracy>,
    pub mean: f64,
    /// Sample standard deviation (0 for a single seed).
    pub std: f64,
}

impl EvalReport {
    pub fn from_seeds(
        dataset: impl Into<String>,
        method: Method,
        shots: usize,
        mut per_seed: Vec<SeedAccuracy>,
    ) -> Self {
        per_seed.sort_by_key(|s| s.seed);
        let n = per_seed.len() as f64;
        let mean = per_seed.iter().map(|s| s.accuracy).sum::<f64>() / n;
        let std = if per_seed.len() > 1 {
            (per_seed
                .iter()
                .map(|s| (s.accuracy - mean).powi(2))
                .sum::<f64>()
                / (n - 1.0))
                .sqrt()
        } else {
            0.0
        };
        Self {
            dataset: dataset.into(),
            method,
            shots,
            per_seed,
            mean,
            std,
        }
    }
}

/// Embeddings of one task. Without a separate test split, every item not
/// drawn as a shot is held out.
#[derive(Clone, Debug)]
pub struct EvalData {
    pub name: String,
    pub features: EmbeddingMatrix,
    pub labels: LabelVector,
    pub prompts: EmbeddingMatrix,
    pub test: Option<(EmbeddingMatrix, LabelVector)>,
}

impl EvalData {
    pub fn new(
        name: impl Into<String>,
        features: EmbeddingMatrix,
        labels: LabelVector,
        prompts: EmbeddingMatrix,
    ) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows for {} labels",
                features.rows(),
                labels.len()
            )));
        }
        Ok(Self {
            name: name.into(),
            features,
            labels,
            prompts,
            test: None,
        })
    }

    pub fn with_test(mut self, features: EmbeddingMatrix, labels: LabelVector) -> Result<Self> {
        if features.rows() != labels.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} test feature rows for {} test labels",
                features.rows(),
                labels.len()
            )));
        }
        if labels.num_classes() > self.labels.num_classes() {
            return Err(Error::LabelOutOfRange {
                index: labels
                    .as_slice()
                    .iter()
                    .position(|&l| l >= self.labels.num_classes())
                    .unwrap_or(0),
                label: labels.num_classes() - 1,
                num_classes: self.labels.num_classes(),
            });
        }
        self.test = Some((features, labels));
        Ok(self)
    }
}

impl From<SyntheticData> for EvalData {
    fn from(s: SyntheticData) -> Self {
        Self {
            name: "synthetic".into(),
            features: s.features,
            labels: s.labels,
            prompts: s.prompts,
            test: None,
        }
    }
}

pub fn evaluate(task: &TaskSpec, data: &EvalData) -> Result<EvalReport> {
    evaluate_with(task, data, Exec::default())
}

/// Runs the task once per seed (seeds in parallel under `exec`).
pub fn evaluate_with(task: &TaskSpec, data: &EvalData, exec: Exec) -> Result<EvalReport> {
    task.validate()?;
    let uses_prompts = task.method != Method::Centroids;
    let train_sims = if uses_prompts {
        Some(similarity_matrix_with(&data.features, &data.prompts, exec)?)
    } else {
        None
    };
    let test_sims = match (&data.test, uses_prompts) {
        (Some((features, _)), true) => Some(similarity_matrix_with(features, &data.prompts, exec)?),
        _ => None,
    };
    let ctx = SeedContext {
        task,
        data,
        train_sims: train_sims.as_ref(),
        test_sims: test_sims.as_ref(),
        exec,
    };
    let per_seed = exec
        .map_range(task.seeds.len(), |i| ctx.run(task.seeds[i]))
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    Ok(EvalReport::from_seeds(
        data.name.clone(),
        task.method,
        task.shots_per_class,
        per_seed,
    ))
}

struct SeedContext<'a> {
    task: &'a TaskSpec,
    data: &'a EvalData,
    train_sims: Option<&'a SimilarityMatrix>,
    test_sims: Option<&'a SimilarityMatrix>,
    exec: Exec,
}

impl SeedContext<'_> {
    fn run(&self, seed: u64) -> Result<SeedAccuracy> {
        let data = self.data;
        let shots = sample_shots(&data.labels, self.task.shots_per_class, seed)?;
        let held_out = shots.complement(data.features.rows());
        let (test_labels, test_rows) = match &data.test {
            Some((_, labels)) => (labels.clone(), None),
            None => (data.labels.select(&held_out), Some(held_out.as_slice())),
        };
        if test_labels.is_empty() {
            return Err(Error::NoTestItems);
        }
        let sims_for_test = || -> SimilarityMatrix {
            match (self.test_sims, test_rows) {
                (Some(t), _) => t.clone(),
                (None, Some(rows)) => self
                    .train_sims
                    .expect("prompt similarities")
                    .select_rows(rows),
                (None, None) => unreachable!("external test split always has similarities"),
            }
        };
        let exec = self.exec;

        let scores = match self.task.method {
            Method::Centroids => {
                let model = fit_centroids(&data.features, &shots)?;
                let test_features = match (&data.test, test_rows) {
                    (Some((f, _)), _) => f.clone(),
                    (None, Some(rows)) => data.features.select_rows(rows),
                    (None, None) => unreachable!(),
                };
                model.score_with(&test_features, exec)?
            }
            method => {
                let train = self
                    .train_sims
                    .expect("prompt similarities")
                    .select_rows(shots.indices());
                let test = sims_for_test();
                match method {
                    Method::Sim => {
                        let config =
                            SolverConfig::with_lambda(self.task.lambda.unwrap_or(DEFAULT_LAMBDA));
                        let model = fit_with(&train, shots.labels(), &config, exec)?;
                        score_with(&model, &test, exec)?
                    }
                    Method::OneToOne => fit_flm(&train, shots.labels())?.score_with(&test, exec)?,
                    Method::Blm => fit_blm(
                        &train,
                        shots.labels(),
                        self.task.smoothing.unwrap_or(DEFAULT_SMOOTHING),
                    )?
                    .score_with(&test, exec)?,
                    Method::Centroids => unreachable!(),
                }
            }
        };
        let predicted = predict(&scores);
        let accuracy = test_labels.accuracy(&predicted)?;
        Ok(SeedAccuracy { seed, accuracy })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn synth(spread: f64, seed: u64) -> EvalData {
        generate_synthetic(&SyntheticSpec {
            num_classes: 4,
            dim: 16,
            prompts: 12,
            shots: 4,
            test_per_class: 10,
            cluster_spread: spread,
            seed,
        })
        .unwrap()
        .into()
    }

    #[test]
    fn mean_of_seeds() {
        let r = EvalReport::from_seeds(
            "x",
            Method::Sim,
            4,
            vec![
                SeedAccuracy {
                    seed: 3,
                    accuracy: 0.7,
                },
                SeedAccuracy {
                    seed: 1,
                    accuracy: 0.5,
                },
                SeedAccuracy {
                    seed: 2,
                    accuracy: 0.6,
                },
            ],
        );
        assert!((r.mean - 0.6).abs() < 1e-12);
        assert!((r.std - 0.1).abs() < 1e-12);
        assert_eq!(r.per_seed[0].seed, 1);
    }

    /// Classes whose nearest prompts coincide cannot be told apart by the
    /// label-mapping baselines, so the noise-free check needs distinct ones.
    fn distinct_nearest_prompts(data: &EvalData) -> bool {
        let sims = crate::similarity::similarity_matrix(&data.features, &data.prompts).unwrap();
        let by_class = data.labels.indices_by_class();
        let mut nearest: Vec<usize> = by_class
            .iter()
            .map(|rows| crate::sim_mapper::argmax(sims.matrix().row(rows[0])))
            .collect();
        nearest.sort_unstable();
        nearest.windows(2).all(|w| w[0] != w[1])
    }

    #[test]
    fn noise_free_all_methods_perfect() {
        let data = (0..)
            .map(|seed| synth(1e-9, seed))
            .find(distinct_nearest_prompts)
            .unwrap();
        for method in Method::ALL {
            let r = evaluate(&TaskSpec::new(method, 4, vec![1, 2, 3]), &data).unwrap();
            assert_eq!(r.mean, 1.0, "{method}");
        }
    }

    #[test]
    fn external_test_split_is_used() {
        let data = synth(0.05, 9);
        let test_features = data.features.select_rows(&[0, 14]);
        let test_labels = LabelVector::new(vec![0, 1], 4).unwrap();
        let data = data.with_test(test_features, test_labels).unwrap();
        for method in Method::ALL {
            let r = evaluate(&TaskSpec::new(method, 4, vec![1]), &data).unwrap();
            assert_eq!(r.per_seed.len(), 1);
            assert!(r.mean == 0.0 || r.mean == 0.5 || r.mean == 1.0);
        }
    }

    #[test]
    fn task_validation() {
        let data = synth(0.1, 1);
        assert!(evaluate(&TaskSpec::new(Method::Sim, 4, vec![]), &data).is_err());
        assert!(evaluate(&TaskSpec::new(Method::Sim, 4, vec![1, 1]), &data).is_err());
        assert!(matches!(
            evaluate(&TaskSpec::new(Method::Sim, 15, vec![1]), &data),
            Err(Error::NotEnoughItems { .. })
        ));
        assert!(matches!(
            evaluate(&TaskSpec::new(Method::Sim, 14, vec![1]), &data),
            Err(Error::NoTestItems)
        ));
    }

    #[test]
    fn method_names_round_trip() {
        for m in Method::ALL {
            assert_eq!(m.id().parse::<Method>().unwrap(), m);
        }
        assert!("svm".parse::<Method>().is_err());
    }
}
