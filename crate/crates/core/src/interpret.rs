//! Per-class ranking of generic prompts by their learned weight.

use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::sim_mapper::MappingModel;

/// Default number of prompts kept per class.
pub const DEFAULT_TOP_K: usize = 4;
const BAR_WIDTH: usize = 20;

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExplanationEntry {
    pub prompt_index: usize,
    pub prompt_name: Option<String>,
    pub weight: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClassExplanation {
    pub class_index: usize,
    pub class_name: Option<String>,
    /// Highest weights first; length `min(top_k, K)`.
    pub entries: Vec<ExplanationEntry>,
    pub top_k: usize,
    /// The most negative weight of the class, if any weight is negative.
    pub strongest_negative: Option<ExplanationEntry>,
}

impl ClassExplanation {
    /// No positive weight among the retained prompts.
    pub fn is_low_confidence(&self) -> bool {
        self.entries.iter().all(|e| e.weight <= 0.0)
    }

    /// Weights divided by the largest retained weight.
    pub fn proportions(&self) -> Vec<f64> {
        let max = self.entries.first().map_or(0.0, |e| e.weight);
        self.entries
            .iter()
            .map(|e| if max == 0.0 { 0.0 } else { e.weight / max })
            .collect()
    }
}

pub fn explain(model: &MappingModel, top_k: usize) -> Result<Vec<ClassExplanation>> {
    explain_with_names(model, top_k, None)
}

/// Ranks prompts by raw signed weight `w[k][c]` for each class `c`. Ties go
/// to the lower prompt index.
pub fn explain_with_names(
    model: &MappingModel,
    top_k: usize,
    class_names: Option<&[String]>,
) -> Result<Vec<ClassExplanation>> {
    if top_k == 0 {
        return Err(Error::InvalidConfig("top_k must be at least 1".into()));
    }
    if let Some(names) = class_names {
        if names.len() != model.num_classes() {
            return Err(Error::DimensionMismatch(format!(
                "{} class names for {} classes",
                names.len(),
                model.num_classes()
            )));
        }
    }
    let w = model.weights();
    let prompt_names = model.prompt_names();
    let entry = |k: usize, weight: f64| ExplanationEntry {
        prompt_index: k,
        prompt_name: prompt_names.map(|n| n[k].clone()),
        weight,
    };
    let explanations = (0..model.num_classes())
        .map(|c| {
            let column = w.column(c);
            let mut order: Vec<usize> = (0..column.len()).collect();
            // stable sort keeps lower indices first among equal weights
            order.sort_by(|&a, &b| column[b].total_cmp(&column[a]));
            let entries = order
                .iter()
                .take(top_k)
                .map(|&k| entry(k, column[k]))
                .collect();
            let strongest_negative = order.last().filter(|&&k| column[k] < 0.0).map(|&k| {
                // lowest index among the most negative weights
                let min = column[k];
                let first = column.iter().position(|&v| v == min).unwrap_or(k);
                entry(first, min)
            });
            ClassExplanation {
                class_index: c,
                class_name: class_names.map(|n| n[c].clone()),
                entries,
                top_k,
                strongest_negative,
            }
        })
        .collect();
    Ok(explanations)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ExplanationFormat {
    Json,
    Markdown,
}

impl FromStr for ExplanationFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "json" => Ok(ExplanationFormat::Json),
            "markdown" | "md" => Ok(ExplanationFormat::Markdown),
            other => Err(Error::ParseFailure(format!(
                "unknown explanation format {other:?}"
            ))),
        }
    }
}

#[derive(Serialize)]
struct JsonClass<'a> {
    #[serde(flatten)]
    class: &'a ClassExplanation,
    proportions: Vec<f64>,
    low_confidence: bool,
}

pub fn render_explanations(
    explanations: &[ClassExplanation],
    format: ExplanationFormat,
) -> Result<String> {
    if explanations.is_empty() {
        return Err(Error::InvalidConfig("no explanations to render".into()));
    }
    match format {
        ExplanationFormat::Json => {
            let doc: Vec<JsonClass> = explanations
                .iter()
                .map(|class| JsonClass {
                    class,
                    proportions: class.proportions(),
                    low_confidence: class.is_low_confidence(),
                })
                .collect();
            let mut s = serde_json::to_string_pretty(&doc)
                .map_err(|e| Error::ParseFailure(e.to_string()))?;
            s.push('\n');
            Ok(s)
        }
        ExplanationFormat::Markdown => Ok(render_markdown(explanations)),
    }
}

fn render_markdown(explanations: &[ClassExplanation]) -> String {
    let mut out = String::new();
    for (i, class) in explanations.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        let title = match &class.class_name {
            Some(name) => format!("Class {} ({name})", class.class_index),
            None => format!("Class {}", class.class_index),
        };
        let _ = writeln!(out, "### {title}\n");
        if class.is_low_confidence() {
            let _ = writeln!(
                out,
                "> low-confidence explanation: no retained prompt has a positive weight\n"
            );
        }
        let _ = writeln!(out, "| Rank | Prompt | Weight | Proportion | Bar |");
        let _ = writeln!(out, "|---:|---|---:|---:|---|");
        for (rank, (e, p)) in class.entries.iter().zip(class.proportions()).enumerate() {
            let bar = "#".repeat((p.clamp(0.0, 1.0) * BAR_WIDTH as f64).round() as usize);
            let _ = writeln!(
                out,
                "| {} | {} | {:.4} | {:.3} | {} |",
                rank + 1,
                prompt_label(e),
                e.weight,
                p,
                bar
            );
        }
        if let Some(neg) = &class.strongest_negative {
            let _ = writeln!(
                out,
                "\nStrongest negative weight: {} ({:.4})",
                prompt_label(neg),
                neg.weight
            );
        }
    }
    out
}

fn prompt_label(e: &ExplanationEntry) -> String {
    match &e.prompt_name {
        Some(name) => format!("{name} (#{})", e.prompt_index),
        None => format!("#{}", e.prompt_index),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matrixio::DenseMatrix;

    fn model(columns: &[&[f64]]) -> MappingModel {
        let k = columns[0].len();
        let mut w = DenseMatrix::zeros(k, columns.len());
        for (c, col) in columns.iter().enumerate() {
            for (r, &v) in col.iter().enumerate() {
                w.set(r, c, v);
            }
        }
        MappingModel::new(w, 1.0, None).unwrap()
    }

    fn pairs(e: &ClassExplanation) -> Vec<(usize, f64)> {
        e.entries
            .iter()
            .map(|e| (e.prompt_index, e.weight))
            .collect()
    }

    #[test]
    fn top_k_sorted() {
        let ex = explain(&model(&[&[0.5, 0.1, 0.3]]), 2).unwrap();
        assert_eq!(pairs(&ex[0]), vec![(0, 0.5), (2, 0.3)]);
    }

    #[test]
    fn ties_break_to_lower_index() {
        let ex = explain(&model(&[&[0.2, 0.2]]), 1).unwrap();
        assert_eq!(pairs(&ex[0]), vec![(0, 0.2)]);
    }

    #[test]
    fn top_k_capped_at_prompt_count() {
        let ex = explain(&model(&[&[0.2, -0.1]]), 4).unwrap();
        assert_eq!(ex[0].entries.len(), 2);
        assert_eq!(ex[0].strongest_negative.as_ref().unwrap().prompt_index, 1);
        assert!(explain(&model(&[&[0.2]]), 0).is_err());
    }

    #[test]
    fn proportions() {
        let ex = explain(&model(&[&[0.5]]), 1).unwrap();
        assert_eq!(ex[0].proportions(), vec![1.0]);
        let ex = explain(&model(&[&[0.25, 0.5]]), 2).unwrap();
        assert_eq!(ex[0].proportions(), vec![1.0, 0.5]);
    }

    #[test]
    fn negative_max_is_flagged() {
        let ex = explain(&model(&[&[-0.1, -0.2]]), 2).unwrap();
        assert!(ex[0].is_low_confidence());
        assert_eq!(ex[0].proportions(), vec![1.0, 2.0]);
        let md = render_explanations(&ex, ExplanationFormat::Markdown).unwrap();
        assert!(md.contains("low-confidence explanation"));
        let json = render_explanations(&ex, ExplanationFormat::Json).unwrap();
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v[0]["low_confidence"], true);
    }

    #[test]
    fn markdown_uses_names() {
        let w = DenseMatrix::from_rows(&[[0.9], [0.1]]).unwrap();
        let m = MappingModel::new(w, 1.0, Some(vec!["impala".into(), "gazelle".into()])).unwrap();
        let names = vec!["gerenuk".to_string()];
        let ex = explain_with_names(&m, 4, Some(&names)).unwrap();
        let md = render_explanations(&ex, ExplanationFormat::Markdown).unwrap();
        assert!(md.starts_with("### Class 0 (gerenuk)"));
        assert!(md.contains("| 1 | impala (#0) | 0.9000 | 1.000 | ####################"));
        assert!(!md.contains("low-confidence"));
    }
}
