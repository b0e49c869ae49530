use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result};

use super::{EvalReport, Method, SeedAccuracy};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            other => Err(Error::ParseFailure(format!(
                "unknown report format {other:?}"
            ))),
        }
    }
}

const CSV_HEADER: [&str; 5] = ["dataset", "method", "shots", "seed", "accuracy"];

fn round4(x: f64) -> f64 {
    (x * 1e4).round() / 1e4
}

pub fn emit_report(reports: &[EvalReport], format: ReportFormat) -> Result<String> {
    if reports.is_empty() {
        return Err(Error::InvalidConfig("no reports to emit".into()));
    }
    match format {
        ReportFormat::Csv => emit_csv(reports),
        ReportFormat::Json => emit_json(reports),
        ReportFormat::Markdown => Ok(emit_markdown(reports)),
    }
}

/// One row per seed followed by `mean` and `std` rows, accuracies to four
/// decimals.
fn emit_csv(reports: &[EvalReport]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let wrap = |e: csv::Error| Error::ParseFailure(e.to_string());
    w.write_record(CSV_HEADER).map_err(wrap)?;
    for r in reports {
        let shots = r.shots.to_string();
        for s in &r.per_seed {
            w.write_record([
                r.dataset.as_str(),
                r.method.id(),
                &shots,
                &s.seed.to_string(),
                &format!("{:.4}", s.accuracy),
            ])
            .map_err(wrap)?;
        }
        for (tag, v) in [("mean", r.mean), ("std", r.std)] {
            w.write_record([
                r.dataset.as_str(),
                r.method.id(),
                &shots,
                tag,
                &format!("{v:.4}"),
            ])
            .map_err(wrap)?;
        }
    }
    let bytes = w
        .into_inner()
        .map_err(|e| Error::ParseFailure(e.to_string()))?;
    String::from_utf8(bytes).map_err(|_| Error::InvalidUtf8)
}

/// Reads a CSV report back. Aggregate rows are ignored and recomputed from
/// the per-seed rows.
pub fn parse_csv_report(text: &str) -> Result<Vec<EvalReport>> {
    let mut rdr = csv::Reader::from_reader(text.as_bytes());
    let header = rdr
        .headers()
        .map_err(|e| Error::ParseFailure(e.to_string()))?
        .clone();
    if header.iter().ne(CSV_HEADER) {
        return Err(Error::ParseFailure(format!(
            "unexpected report header {header:?}"
        )));
    }
    let mut groups: Vec<((String, Method, usize), Vec<SeedAccuracy>)> = Vec::new();
    for rec in rdr.records() {
        let rec = rec.map_err(|e| Error::ParseFailure(e.to_string()))?;
        let field = |i: usize| rec.get(i).unwrap_or_default();
        let parse_err = |what: &str| Error::ParseFailure(format!("bad {what} in {rec:?}"));
        let seed = field(3);
        if seed == "mean" || seed == "std" {
            continue;
        }
        let key = (
            field(0).to_owned(),
            field(1).parse::<Method>()?,
            field(2).parse::<usize>().map_err(|_| parse_err("shots"))?,
        );
        let entry = SeedAccuracy {
            seed: seed.parse().map_err(|_| parse_err("seed"))?,
            accuracy: field(4).parse().map_err(|_| parse_err("accuracy"))?,
        };
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, seeds)) => seeds.push(entry),
            None => groups.push((key, vec![entry])),
        }
    }
    Ok(groups
        .into_iter()
        .map(|((dataset, method, shots), seeds)| {
            EvalReport::from_seeds(dataset, method, shots, seeds)
        })
        .collect())
}

#[derive(Serialize)]
struct JsonDoc<'a> {
    reports: Vec<JsonReport<'a>>,
}

#[derive(Serialize)]
struct JsonReport<'a> {
    dataset: &'a str,
    method: Method,
    shots: usize,
    per_seed: Vec<SeedAccuracy>,
    mean: f64,
    std: f64,
}

fn emit_json(reports: &[EvalReport]) -> Result<String> {
    let doc = JsonDoc {
        reports: reports
            .iter()
            .map(|r| JsonReport {
                dataset: &r.dataset,
                method: r.method,
                shots: r.shots,
                per_seed: r
                    .per_seed
                    .iter()
                    .map(|s| SeedAccuracy {
                        seed: s.seed,
                        accuracy: round4(s.accuracy),
                    })
                    .collect(),
                mean: round4(r.mean),
                std: round4(r.std),
            })
            .collect(),
    };
    let mut s =
        serde_json::to_string_pretty(&doc).map_err(|e| Error::ParseFailure(e.to_string()))?;
    s.push('\n');
    Ok(s)
}

/// Table with shots as row blocks, methods as rows and datasets as columns
/// (plus an average column when there are several). Values are mean top-1
/// accuracy in percent with one decimal.
fn emit_markdown(reports: &[EvalReport]) -> String {
    let mut datasets: Vec<&str> = Vec::new();
    for r in reports {
        if !datasets.contains(&r.dataset.as_str()) {
            datasets.push(&r.dataset);
        }
    }
    let mut cells: BTreeMap<(usize, Method), BTreeMap<&str, f64>> = BTreeMap::new();
    for r in reports {
        cells
            .entry((r.shots, r.method))
            .or_default()
            .insert(&r.dataset, r.mean);
    }
    let with_average = datasets.len() > 1;

    let mut out = String::new();
    let mut header = vec!["Shots", "Method"];
    header.extend(datasets.iter().copied());
    if with_average {
        header.push("Average");
    }
    let _ = writeln!(out, "| {} |", header.join(" | "));
    let _ = writeln!(
        out,
        "|{}",
        header
            .iter()
            .enumerate()
            .map(|(i, _)| if i < 2 { "---|" } else { "---:|" })
            .collect::<String>()
    );
    let mut last_shots = None;
    for ((shots, method), values) in &cells {
        let shots_cell = if last_shots == Some(*shots) {
            String::new()
        } else {
            shots.to_string()
        };
        last_shots = Some(*shots);
        let mut row = vec![shots_cell, method.label().to_string()];
        for d in &datasets {
            row.push(match values.get(d) {
                Some(v) => format!("{:.1}", 100.0 * v),
                None => "-".into(),
            });
        }
        if with_average {
            let avg = values.values().sum::<f64>() / values.len() as f64;
            row.push(format!("{:.1}", 100.0 * avg));
        }
        let _ = writeln!(out, "| {} |", row.join(" | "));
    }
    out
}
