//! Model files: weights as VFEB (`<stem>.vfeb`) plus a JSON metadata
//! sidecar (`<stem>.json`).

use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::baselines::{AssignmentModel, CentroidModel};
use crate::error::{Error, Result};
use crate::harness::Method;
use crate::matrixio::{read_vfeb, write_vfeb, DenseMatrix, EmbeddingMatrix};
use crate::sim_mapper::MappingModel;

pub const METADATA_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq)]
pub enum SavedModel {
    Mapping(MappingModel),
    Assignment(AssignmentModel),
    Centroids(CentroidModel),
}

impl SavedModel {
    pub fn method(&self) -> Method {
        match self {
            SavedModel::Mapping(_) => Method::Sim,
            SavedModel::Assignment(AssignmentModel::OneToOne { .. }) => Method::OneToOne,
            SavedModel::Assignment(AssignmentModel::Bayesian { .. }) => Method::Blm,
            SavedModel::Centroids(_) => Method::Centroids,
        }
    }

    pub fn num_classes(&self) -> usize {
        match self {
            SavedModel::Mapping(m) => m.num_classes(),
            SavedModel::Assignment(a) => a.num_classes(),
            SavedModel::Centroids(c) => c.num_classes(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelMetadata {
    pub format_version: u32,
    pub method: Method,
    /// Rows and columns of the VFEB weight file.
    pub rows: usize,
    pub cols: usize,
    /// Number of generic prompts `K`; absent for centroids.
    pub num_prompts: Option<usize>,
    pub num_classes: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jitter_applied: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothing: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mapping: Option<Vec<usize>>,
    /// Seconds since the Unix epoch; `SOURCE_DATE_EPOCH` overrides the clock.
    pub created_unix: u64,
    /// SHA-256 of the prompt-bank file the similarities were computed with.
    pub prompt_bank_digest: Option<String>,
}

/// Returns `(<stem>.vfeb, <stem>.json)`.
pub fn model_paths(stem: impl AsRef<Path>) -> (PathBuf, PathBuf) {
    let stem = stem.as_ref();
    let base = match stem.extension().and_then(|e| e.to_str()) {
        Some("vfeb" | "json") => stem.with_extension(""),
        _ => stem.to_path_buf(),
    };
    let with = |ext: &str| {
        let mut p = base.clone().into_os_string();
        p.push(".");
        p.push(ext);
        PathBuf::from(p)
    };
    (with("vfeb"), with("json"))
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes)
        .iter()
        .map(|b| format!("{b:02x}"))
        .collect()
}

pub fn file_digest(path: impl AsRef<Path>) -> Result<String> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

fn created_unix() -> u64 {
    if let Some(epoch) = std::env::var("SOURCE_DATE_EPOCH")
        .ok()
        .and_then(|v| v.trim().parse().ok())
    {
        return epoch;
    }
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

fn weights_embedding(w: &DenseMatrix<f64>, names: Option<&[String]>) -> Result<EmbeddingMatrix> {
    EmbeddingMatrix::new(w.to_f32(), names.map(<[String]>::to_vec), false)
}

pub fn save_model(
    model: &SavedModel,
    stem: impl AsRef<Path>,
    prompt_bank_digest: Option<String>,
) -> Result<ModelMetadata> {
    let (weights_path, meta_path) = model_paths(stem);
    let mut meta = ModelMetadata {
        format_version: METADATA_VERSION,
        method: model.method(),
        rows: 0,
        cols: 0,
        num_prompts: None,
        num_classes: model.num_classes(),
        lambda: None,
        jitter_applied: None,
        smoothing: None,
        mapping: None,
        created_unix: created_unix(),
        prompt_bank_digest,
    };
    let weights = match model {
        SavedModel::Mapping(m) => {
            meta.lambda = Some(m.lambda());
            meta.jitter_applied = Some(m.jitter_applied());
            meta.num_prompts = Some(m.num_prompts());
            weights_embedding(m.weights(), m.prompt_names())?
        }
        SavedModel::Assignment(a) => {
            meta.num_prompts = Some(a.num_prompts());
            match a {
                AssignmentModel::OneToOne { mapping, .. } => meta.mapping = Some(mapping.clone()),
                AssignmentModel::Bayesian { smoothing, .. } => meta.smoothing = Some(*smoothing),
            }
            weights_embedding(&a.weight_matrix(), None)?
        }
        SavedModel::Centroids(c) => c.centroids().clone(),
    };
    meta.rows = weights.rows();
    meta.cols = weights.dim();
    write_vfeb(&weights, &weights_path)?;
    let mut json =
        serde_json::to_string_pretty(&meta).map_err(|e| Error::ParseFailure(e.to_string()))?;
    json.push('\n');
    fs::write(&meta_path, json).map_err(|e| Error::io(&meta_path, e))?;
    Ok(meta)
}

pub fn load_model(stem: impl AsRef<Path>) -> Result<(SavedModel, ModelMetadata)> {
    let (weights_path, meta_path) = model_paths(stem);
    let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
    let meta: ModelMetadata =
        serde_json::from_str(&text).map_err(|e| Error::InvalidModel(e.to_string()))?;
    if meta.format_version != METADATA_VERSION {
        return Err(Error::InvalidModel(format!(
            "metadata version {} is not supported",
            meta.format_version
        )));
    }
    let weights = read_vfeb(&weights_path)?;
    if (weights.rows(), weights.dim()) != (meta.rows, meta.cols) {
        return Err(Error::InvalidModel(format!(
            "weights are {}x{}, metadata says {}x{}",
            weights.rows(),
            weights.dim(),
            meta.rows,
            meta.cols
        )));
    }
    let model = match meta.method {
        Method::Sim => {
            let (m, names, _) = weights.into_parts();
            let mut model = MappingModel::new(m.to_f64(), meta.lambda.unwrap_or(f64::NAN), names)?;
            if let Some(j) = meta.jitter_applied {
                model = model.with_jitter_applied(j);
            }
            SavedModel::Mapping(model)
        }
        Method::OneToOne => {
            let mapping = meta
                .mapping
                .clone()
                .ok_or_else(|| Error::InvalidModel("one-to-one model without mapping".into()))?;
            let num_prompts = weights.rows();
            if mapping.len() != weights.dim() || mapping.iter().any(|&k| k >= num_prompts) {
                return Err(Error::InvalidModel(
                    "mapping does not fit the weight matrix".into(),
                ));
            }
            SavedModel::Assignment(AssignmentModel::OneToOne {
                mapping,
                num_prompts,
            })
        }
        Method::Blm => SavedModel::Assignment(AssignmentModel::Bayesian {
            weights: weights.matrix().to_f64(),
            smoothing: meta.smoothing.unwrap_or(f64::NAN),
        }),
        Method::Centroids => SavedModel::Centroids(CentroidModel::new(weights)?),
    };
    Ok((model, meta))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paths_from_stem() {
        let (w, m) = model_paths("out/model");
        assert_eq!(w, PathBuf::from("out/model.vfeb"));
        assert_eq!(m, PathBuf::from("out/model.json"));
        assert_eq!(
            model_paths("out/model.vfeb").1,
            PathBuf::from("out/model.json")
        );
        assert_eq!(model_paths("a.b").0, PathBuf::from("a.b.vfeb"));
    }

    #[test]
    fn digest_is_sha256() {
        assert_eq!(
            sha256_hex(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }

    #[test]
    fn mapping_model_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("m");
        let w = DenseMatrix::from_rows(&[[0.5f64, -0.25], [1.0, 2.0]]).unwrap();
        let model = MappingModel::new(w, 0.1, Some(vec!["cat".into(), "dog".into()])).unwrap();
        let meta = save_model(
            &SavedModel::Mapping(model.clone()),
            &stem,
            Some("ab".into()),
        )
        .unwrap();
        assert_eq!((meta.rows, meta.cols, meta.num_classes), (2, 2, 2));
        let (loaded, meta2) = load_model(&stem).unwrap();
        assert_eq!(meta, meta2);
        assert_eq!(loaded, SavedModel::Mapping(model));
    }

    #[test]
    fn one_to_one_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("flm");
        let model = SavedModel::Assignment(AssignmentModel::OneToOne {
            mapping: vec![2, 0],
            num_prompts: 3,
        });
        save_model(&model, &stem, None).unwrap();
        assert_eq!(load_model(&stem).unwrap().0, model);
    }

    #[test]
    fn mismatched_sidecar_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("m");
        let model = MappingModel::new(DenseMatrix::identity(2), 1.0, None).unwrap();
        save_model(&SavedModel::Mapping(model), &stem, None).unwrap();
        let (_, meta_path) = model_paths(&stem);
        let text = fs::read_to_string(&meta_path)
            .unwrap()
            .replace("\"rows\": 2", "\"rows\": 3");
        fs::write(&meta_path, text).unwrap();
        assert!(matches!(load_model(&stem), Err(Error::InvalidModel(_))));
    }
}
