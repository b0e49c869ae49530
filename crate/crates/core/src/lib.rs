//! Vocabulary-free few-shot classification on precomputed vision-language
//! embeddings.
//!
//! Image features are compared against a bank of generic prompt embeddings;
//! a ridge-regularized linear map ([`sim_mapper`]) turns those similarity
//! scores into class scores learned from a handful of labeled shots. The
//! crate also ships the usual comparison methods ([`baselines`]), a seeded
//! evaluation harness ([`harness`]) and weight-based explanations
//! ([`interpret`]).

pub mod baselines;
pub mod error;
pub mod exec;
pub mod harness;
pub mod interpret;
pub mod linalg;
pub mod matrixio;
pub mod persist;
pub mod sim_mapper;
pub mod similarity;

pub use error::{Error, Result};
pub use exec::Exec;
pub use matrixio::{DenseMatrix, EmbeddingMatrix, LabelVector, ShotSet};
pub use sim_mapper::{fit, predict, score, MappingModel, ScoreMatrix, SolverConfig};
pub use similarity::{l2_normalize, similarity_matrix, SimilarityMatrix};
