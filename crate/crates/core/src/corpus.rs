//! Dataset records shared by every other module.
//!
//! A [`LabeledCorpus`] holds a row-major feature matrix together with noisy
//! labels, optional clean labels and an optional sub-population assignment.
//! Construction never rejects data that merely breaks a semantic invariant;
//! [`LabeledCorpus::validate`] reports those as [`Violation`]s so that callers
//! can show every problem at once. Operations that need a valid corpus call
//! [`LabeledCorpus::ensure_valid`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Which label column a violation refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LabelColumn {
    Clean,
    Noisy,
}

impl fmt::Display for LabelColumn {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            LabelColumn::Clean => f.write_str("clean"),
            LabelColumn::Noisy => f.write_str("noisy"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Violation {
    ClassCountTooSmall {
        class_count: usize,
    },
    GroupCountZero,
    LabelOutOfRange {
        row: usize,
        column: LabelColumn,
        label: usize,
    },
    CleanLengthMismatch {
        expected: usize,
        found: usize,
    },
    AssignmentLengthMismatch {
        expected: usize,
        found: usize,
    },
    GroupOutOfRange {
        row: usize,
        group: usize,
    },
    NonFiniteFeature {
        row: usize,
        column: usize,
    },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::ClassCountTooSmall { class_count } => {
                write!(f, "class count {class_count} below 2")
            }
            Violation::GroupCountZero => f.write_str("group count is zero"),
            Violation::LabelOutOfRange { row, column, label } => {
                write!(
                    f,
                    "label out of range at row {row} ({column} label {label})"
                )
            }
            Violation::CleanLengthMismatch { expected, found } => {
                write!(
                    f,
                    "clean label length mismatch: expected {expected}, found {found}"
                )
            }
            Violation::AssignmentLengthMismatch { expected, found } => {
                write!(
                    f,
                    "assignment length mismatch: expected {expected}, found {found}"
                )
            }
            Violation::GroupOutOfRange { row, group } => {
                write!(f, "group id out of range at row {row} (group {group})")
            }
            Violation::NonFiniteFeature { row, column } => {
                write!(f, "non-finite feature at row {row}, column {column}")
            }
        }
    }
}

/// Per-sample sub-population index in `[0, group_count)`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupAssignment {
    group_ids: Vec<usize>,
    group_count: usize,
}

impl GroupAssignment {
    /// Builds an assignment, rejecting ids outside `[0, group_count)`.
    pub fn new(group_ids: Vec<usize>, group_count: usize) -> Result<Self> {
        if group_count == 0 {
            return Err(Error::InvalidParameter(
                "group count must be at least 1".into(),
            ));
        }
        if let Some((row, &g)) = group_ids
            .iter()
            .enumerate()
            .find(|(_, &g)| g >= group_count)
        {
            return Err(Error::InvalidParameter(format!(
                "group id {g} at row {row} exceeds group count {group_count}"
            )));
        }
        Ok(Self {
            group_ids,
            group_count,
        })
    }

    /// Builds an assignment without range checks. Use [`LabeledCorpus::validate`]
    /// to inspect the result.
    pub fn new_unchecked(group_ids: Vec<usize>, group_count: usize) -> Self {
        Self {
            group_ids,
            group_count,
        }
    }

    /// A single group holding every sample.
    pub fn single(n: usize) -> Self {
        Self {
            group_ids: vec![0; n],
            group_count: 1,
        }
    }

    pub fn ids(&self) -> &[usize] {
        &self.group_ids
    }

    pub fn group_count(&self) -> usize {
        self.group_count
    }

    pub fn len(&self) -> usize {
        self.group_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.group_ids.is_empty()
    }

    /// Member count of every group; sums to `len()`.
    pub fn counts(&self) -> Vec<usize> {
        let mut counts = vec![0; self.group_count];
        for &g in &self.group_ids {
            if g < self.group_count {
                counts[g] += 1;
            }
        }
        counts
    }

    /// Row indices belonging to group `g`, in ascending order.
    pub fn members(&self, g: usize) -> Vec<usize> {
        self.group_ids
            .iter()
            .enumerate()
            .filter_map(|(i, &x)| (x == g).then_some(i))
            .collect()
    }

    fn select(&self, rows: &[usize]) -> Self {
        Self {
            group_ids: rows.iter().map(|&i| self.group_ids[i]).collect(),
            group_count: self.group_count,
        }
    }
}

/// Feature rows with noisy labels and optional clean labels and groups.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledCorpus {
    features: Vec<f64>,
    dim: usize,
    clean_labels: Option<Vec<usize>>,
    noisy_labels: Vec<usize>,
    class_count: usize,
    groups: Option<GroupAssignment>,
}

impl LabeledCorpus {
    /// Assembles a corpus from row-major features. The only hard requirement
    /// is that `features.len() == noisy_labels.len() * dim`; everything else
    /// is checked by [`validate`](Self::validate).
    pub fn new(
        features: Vec<f64>,
        dim: usize,
        clean_labels: Option<Vec<usize>>,
        noisy_labels: Vec<usize>,
        class_count: usize,
        groups: Option<GroupAssignment>,
    ) -> Result<Self> {
        if features.len() != noisy_labels.len() * dim {
            return Err(Error::LengthMismatch {
                expected: noisy_labels.len() * dim,
                found: features.len(),
            });
        }
        Ok(Self {
            features,
            dim,
            clean_labels,
            noisy_labels,
            class_count,
            groups,
        })
    }

    /// Corpus whose noisy labels equal its clean labels.
    pub fn clean(
        features: Vec<f64>,
        dim: usize,
        labels: Vec<usize>,
        class_count: usize,
    ) -> Result<Self> {
        Self::new(
            features,
            dim,
            Some(labels.clone()),
            labels,
            class_count,
            None,
        )
    }

    pub fn len(&self) -> usize {
        self.noisy_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.noisy_labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn class_count(&self) -> usize {
        self.class_count
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn clean_labels(&self) -> Option<&[usize]> {
        self.clean_labels.as_deref()
    }

    pub fn noisy_labels(&self) -> &[usize] {
        &self.noisy_labels
    }

    pub fn groups(&self) -> Option<&GroupAssignment> {
        self.groups.as_ref()
    }

    /// Clean labels, or an error when the corpus has none.
    pub fn require_clean(&self) -> Result<&[usize]> {
        self.clean_labels().ok_or(Error::MissingCleanLabels)
    }

    pub fn require_groups(&self) -> Result<&GroupAssignment> {
        self.groups().ok_or(Error::MissingGroupAssignment)
    }

    /// Same rows with `noisy_labels` replaced.
    pub fn with_noisy_labels(&self, noisy_labels: Vec<usize>) -> Result<Self> {
        if noisy_labels.len() != self.len() {
            return Err(Error::LengthMismatch {
                expected: self.len(),
                found: noisy_labels.len(),
            });
        }
        Ok(Self {
            noisy_labels,
            ..self.clone()
        })
    }

    /// Same rows with the group assignment replaced.
    pub fn with_groups(&self, groups: Option<GroupAssignment>) -> Self {
        Self {
            groups,
            ..self.clone()
        }
    }

    /// Rows `rows` in the given order. Group indices and class count are kept.
    pub fn select(&self, rows: &[usize]) -> Self {
        let mut features = Vec::with_capacity(rows.len() * self.dim);
        for &i in rows {
            features.extend_from_slice(self.row(i));
        }
        Self {
            features,
            dim: self.dim,
            clean_labels: self
                .clean_labels
                .as_ref()
                .map(|c| rows.iter().map(|&i| c[i]).collect()),
            noisy_labels: rows.iter().map(|&i| self.noisy_labels[i]).collect(),
            class_count: self.class_count,
            groups: self.groups.as_ref().map(|g| g.select(rows)),
        }
    }

    /// Lists every invariant violation; empty means the corpus is valid.
    pub fn validate(&self) -> Vec<Violation> {
        let n = self.len();
        let k = self.class_count;
        let mut out = Vec::new();
        if k < 2 {
            out.push(Violation::ClassCountTooSmall { class_count: k });
        }
        for (row, &label) in self.noisy_labels.iter().enumerate() {
            if label >= k {
                out.push(Violation::LabelOutOfRange {
                    row,
                    column: LabelColumn::Noisy,
                    label,
                });
            }
        }
        if let Some(clean) = &self.clean_labels {
            if clean.len() != n {
                out.push(Violation::CleanLengthMismatch {
                    expected: n,
                    found: clean.len(),
                });
            }
            for (row, &label) in clean.iter().enumerate() {
                if label >= k {
                    out.push(Violation::LabelOutOfRange {
                        row,
                        column: LabelColumn::Clean,
                        label,
                    });
                }
            }
        }
        if let Some(groups) = &self.groups {
            if groups.group_count == 0 {
                out.push(Violation::GroupCountZero);
            }
            if groups.len() != n {
                out.push(Violation::AssignmentLengthMismatch {
                    expected: n,
                    found: groups.len(),
                });
            }
            for (row, &group) in groups.ids().iter().enumerate() {
                if group >= groups.group_count {
                    out.push(Violation::GroupOutOfRange { row, group });
                }
            }
        }
        for (idx, x) in self.features.iter().enumerate() {
            if !x.is_finite() {
                out.push(Violation::NonFiniteFeature {
                    row: idx / self.dim.max(1),
                    column: idx % self.dim.max(1),
                });
            }
        }
        out
    }

    pub fn ensure_valid(&self) -> Result<()> {
        let v = self.validate();
        if v.is_empty() {
            Ok(())
        } else {
            Err(Error::InvalidCorpus(v))
        }
    }

    /// Tallies per class and per group.
    ///
    /// Class counts use the clean labels when present and the noisy labels
    /// otherwise.
    pub fn summary(&self) -> CorpusSummary {
        let labels = self.clean_labels().unwrap_or(&self.noisy_labels);
        let mut per_class_counts = vec![0usize; self.class_count];
        for &y in labels {
            if y < self.class_count {
                per_class_counts[y] += 1;
            }
        }
        let per_group_counts = self.groups.as_ref().map(|g| g.counts()).unwrap_or_default();
        let max = per_class_counts.iter().copied().max().unwrap_or(0);
        let min_nonzero = per_class_counts.iter().copied().filter(|&c| c > 0).min();
        let empirical_imbalance_ratio = min_nonzero.map(|m| max as f64 / m as f64);
        let empirical_noise_rate = self.clean_labels.as_ref().and_then(|clean| {
            if clean.is_empty() {
                return None;
            }
            let flipped = clean
                .iter()
                .zip(&self.noisy_labels)
                .filter(|(a, b)| a != b)
                .count();
            Some(flipped as f64 / clean.len() as f64)
        });
        CorpusSummary {
            per_class_counts,
            per_group_counts,
            empirical_imbalance_ratio,
            empirical_noise_rate,
        }
    }
}

/// Counts and rates derived from a corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorpusSummary {
    pub per_class_counts: Vec<usize>,
    /// Empty when the corpus has no group assignment.
    pub per_group_counts: Vec<usize>,
    /// max count / min nonzero count; `None` when every class is empty.
    pub empirical_imbalance_ratio: Option<f64>,
    /// Fraction of rows whose noisy label differs from the clean one.
    pub empirical_noise_rate: Option<f64>,
}

/// Free-function form of [`LabeledCorpus::validate`].
pub fn validate_corpus(corpus: &LabeledCorpus) -> Vec<Violation> {
    corpus.validate()
}

/// Free-function form of [`LabeledCorpus::summary`].
pub fn corpus_stats(corpus: &LabeledCorpus) -> CorpusSummary {
    corpus.summary()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced(k: usize, per: usize) -> LabeledCorpus {
        let labels: Vec<usize> = (0..k)
            .flat_map(|c| std::iter::repeat(c).take(per))
            .collect();
        let n = labels.len();
        LabeledCorpus::clean((0..n).map(|i| i as f64).collect(), 1, labels, k).unwrap()
    }

    #[test]
    fn label_equal_to_class_count_is_reported() {
        let c = LabeledCorpus::new(vec![0.0; 3], 1, None, vec![0, 3, 1], 3, None).unwrap();
        let v = c.validate();
        assert_eq!(v.len(), 1);
        assert_eq!(
            v[0].to_string(),
            "label out of range at row 1 (noisy label 3)"
        );
    }

    #[test]
    fn empty_corpus_is_valid() {
        let c = LabeledCorpus::new(
            vec![],
            4,
            Some(vec![]),
            vec![],
            2,
            Some(GroupAssignment::single(0)),
        )
        .unwrap();
        assert!(c.validate().is_empty());
    }

    #[test]
    fn short_group_assignment_is_reported() {
        let groups = GroupAssignment::new(vec![0, 1], 2).unwrap();
        let c = LabeledCorpus::new(vec![0.0; 3], 1, None, vec![0, 1, 1], 2, Some(groups)).unwrap();
        let v = c.validate();
        assert!(matches!(
            v[0],
            Violation::AssignmentLengthMismatch {
                expected: 3,
                found: 2
            }
        ));
        assert!(v[0].to_string().starts_with("assignment length mismatch"));
    }

    #[test]
    fn every_violation_is_listed() {
        let groups = GroupAssignment::new_unchecked(vec![0, 5, 1], 2);
        let c = LabeledCorpus::new(
            vec![0.0, f64::NAN, 1.0],
            1,
            Some(vec![2, 0]),
            vec![0, 1, 9],
            2,
            Some(groups),
        )
        .unwrap();
        let v = c.validate();
        assert!(v.contains(&Violation::LabelOutOfRange {
            row: 2,
            column: LabelColumn::Noisy,
            label: 9
        }));
        assert!(v.contains(&Violation::CleanLengthMismatch {
            expected: 3,
            found: 2
        }));
        assert!(v.contains(&Violation::LabelOutOfRange {
            row: 0,
            column: LabelColumn::Clean,
            label: 2
        }));
        assert!(v.contains(&Violation::GroupOutOfRange { row: 1, group: 5 }));
        assert!(v.contains(&Violation::NonFiniteFeature { row: 1, column: 0 }));
        assert!(c.ensure_valid().is_err());
    }

    #[test]
    fn balanced_clean_stats() {
        let s = balanced(10, 100).summary();
        assert_eq!(s.per_class_counts, vec![100; 10]);
        assert_eq!(s.empirical_imbalance_ratio, Some(1.0));
        assert_eq!(s.empirical_noise_rate, Some(0.0));
    }

    #[test]
    fn ratio_absent_when_all_classes_empty() {
        let c = LabeledCorpus::new(vec![], 1, None, vec![], 3, None).unwrap();
        let s = c.summary();
        assert_eq!(s.empirical_imbalance_ratio, None);
        assert_eq!(s.empirical_noise_rate, None);
    }

    #[test]
    fn class_and_group_counts_both_sum_to_n() {
        let c = balanced(3, 4).with_groups(Some(
            GroupAssignment::new(vec![0, 1, 2, 3, 0, 1, 2, 3, 0, 1, 2, 3], 5).unwrap(),
        ));
        let s = c.summary();
        assert_eq!(s.per_class_counts.iter().sum::<usize>(), 12);
        assert_eq!(s.per_group_counts.iter().sum::<usize>(), 12);
        assert_eq!(s.per_group_counts, vec![3, 3, 3, 3, 0]);
    }

    #[test]
    fn select_keeps_group_count() {
        let c =
            balanced(2, 2).with_groups(Some(GroupAssignment::new(vec![0, 1, 2, 0], 3).unwrap()));
        let s = c.select(&[3, 0]);
        assert_eq!(s.noisy_labels(), &[1, 0]);
        assert_eq!(s.groups().unwrap().ids(), &[0, 0]);
        assert_eq!(s.groups().unwrap().group_count(), 3);
        assert_eq!(s.row(0), &[3.0]);
    }
}
