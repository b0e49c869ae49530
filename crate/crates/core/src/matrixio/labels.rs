use std::collections::HashSet;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};

/// Class indices in `0..num_classes`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LabelVector {
    labels: Vec<usize>,
    num_classes: usize,
}

impl LabelVector {
    pub fn new(labels: Vec<usize>, num_classes: usize) -> Result<Self> {
        if let Some((index, &label)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::LabelOutOfRange {
                index,
                label,
                num_classes,
            });
        }
        Ok(Self {
            labels,
            num_classes,
        })
    }

    /// Infers `num_classes` as `max(label) + 1`.
    pub fn from_labels(labels: Vec<usize>) -> Self {
        let num_classes = labels.iter().max().map_or(0, |&m| m + 1);
        Self {
            labels,
            num_classes,
        }
    }

    pub fn as_slice(&self) -> &[usize] {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn get(&self, i: usize) -> usize {
        self.labels[i]
    }

    pub fn select(&self, indices: &[usize]) -> Self {
        Self {
            labels: indices.iter().map(|&i| self.labels[i]).collect(),
            num_classes: self.num_classes,
        }
    }

    /// Number of items per class.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.num_classes];
        for &l in &self.labels {
            counts[l] += 1;
        }
        counts
    }

    /// Training sets need every class represented at least once.
    pub fn require_all_classes(&self) -> Result<()> {
        match self.class_counts().iter().position(|&c| c == 0) {
            Some(c) => Err(Error::EmptyClass(c)),
            None => Ok(()),
        }
    }

    /// Indices of the items of each class, in ascending order.
    pub fn indices_by_class(&self) -> Vec<Vec<usize>> {
        let mut by_class = vec![Vec::new(); self.num_classes];
        for (i, &l) in self.labels.iter().enumerate() {
            by_class[l].push(i);
        }
        by_class
    }

    /// Fraction of positions where `predicted` agrees with `self`.
    pub fn accuracy(&self, predicted: &LabelVector) -> Result<f64> {
        if predicted.len() != self.len() {
            return Err(Error::DimensionMismatch(format!(
                "{} predictions for {} labels",
                predicted.len(),
                self.len()
            )));
        }
        if self.is_empty() {
            return Err(Error::NoTestItems);
        }
        let hits = self
            .labels
            .iter()
            .zip(&predicted.labels)
            .filter(|(a, b)| a == b)
            .count();
        Ok(hits as f64 / self.len() as f64)
    }
}

/// A balanced few-shot support set: row indices plus their labels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ShotSet {
    indices: Vec<usize>,
    labels: LabelVector,
    shots_per_class: usize,
}

impl ShotSet {
    pub fn new(indices: Vec<usize>, labels: LabelVector, shots_per_class: usize) -> Result<Self> {
        if indices.len() != labels.len() {
            return Err(Error::InvalidShotSet(format!(
                "{} indices for {} labels",
                indices.len(),
                labels.len()
            )));
        }
        let mut seen = HashSet::with_capacity(indices.len());
        if let Some(dup) = indices.iter().find(|&&i| !seen.insert(i)) {
            return Err(Error::InvalidShotSet(format!("index {dup} appears twice")));
        }
        if let Some(c) = labels
            .class_counts()
            .iter()
            .position(|&n| n != shots_per_class)
        {
            return Err(Error::InvalidShotSet(format!(
                "class {c} does not have exactly {shots_per_class} shots"
            )));
        }
        Ok(Self {
            indices,
            labels,
            shots_per_class,
        })
    }

    pub fn indices(&self) -> &[usize] {
        &self.indices
    }

    pub fn labels(&self) -> &LabelVector {
        &self.labels
    }

    pub fn shots_per_class(&self) -> usize {
        self.shots_per_class
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Indices in `0..total` that are not part of the support set.
    pub fn complement(&self, total: usize) -> Vec<usize> {
        let taken: HashSet<usize> = self.indices.iter().copied().collect();
        (0..total).filter(|i| !taken.contains(i)).collect()
    }
}

/// Reads a labels file: one non-negative integer per line. Blank lines are
/// skipped.
pub fn read_labels(path: impl AsRef<Path>) -> Result<LabelVector> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_labels(&text)
}

pub fn parse_labels(text: &str) -> Result<LabelVector> {
    let mut labels = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() {
            continue;
        }
        let label = line
            .parse::<usize>()
            .map_err(|e| Error::ParseFailure(format!("labels line {}: {e}", n + 1)))?;
        labels.push(label);
    }
    Ok(LabelVector::from_labels(labels))
}

pub fn write_labels(labels: &LabelVector, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut text = String::with_capacity(labels.len() * 3);
    for l in labels.as_slice() {
        text.push_str(&l.to_string());
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn out_of_range_label() {
        assert!(matches!(
            LabelVector::new(vec![0, 2], 2),
            Err(Error::LabelOutOfRange {
                index: 1,
                label: 2,
                ..
            })
        ));
    }

    #[test]
    fn missing_class_detected() {
        let l = LabelVector::new(vec![0, 0, 2], 3).unwrap();
        assert!(matches!(l.require_all_classes(), Err(Error::EmptyClass(1))));
    }

    #[test]
    fn shot_set_checks_balance_and_duplicates() {
        let labels = LabelVector::new(vec![0, 1, 1], 2).unwrap();
        assert!(ShotSet::new(vec![0, 1, 2], labels, 1).is_err());
        let labels = LabelVector::new(vec![0, 1], 2).unwrap();
        assert!(ShotSet::new(vec![3, 3], labels.clone(), 1).is_err());
        let s = ShotSet::new(vec![3, 1], labels, 1).unwrap();
        assert_eq!(s.complement(5), vec![0, 2, 4]);
    }

    #[test]
    fn labels_text_parse() {
        let l = parse_labels("0\n2\n\n1\n").unwrap();
        assert_eq!(l.as_slice(), &[0, 2, 1]);
        assert_eq!(l.num_classes(), 3);
        assert!(parse_labels("0\n-1\n").is_err());
    }
}
