//! Leave-one-group-out influence by retraining.
//!
//! The full model and every ablated model are trained with the same config
//! and seed, so the removed rows are the only difference between them.

use serde::{Deserialize, Serialize};

use crate::corpus::LabeledCorpus;
use crate::error::{Error, Result};
use crate::trainer::{train, Evaluation, ModelSpec, TrainConfig};

/// Rows of `corpus` outside group `i`. Group ids are kept, so group `i`
/// simply becomes empty.
pub fn remove_group(corpus: &LabeledCorpus, i: usize) -> Result<LabeledCorpus> {
    let groups = corpus.require_groups()?;
    if i >= groups.group_count() {
        return Err(Error::UnknownGroup {
            group: i,
            group_count: groups.group_count(),
        });
    }
    let keep: Vec<usize> = groups
        .ids()
        .iter()
        .enumerate()
        .filter(|(_, &g)| g != i)
        .map(|(r, _)| r)
        .collect();
    Ok(corpus.select(&keep))
}

/// Five-number summary with 1.5·IQR outliers. Quartiles interpolate
/// linearly between order statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoxSummary {
    pub count: usize,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
    pub lower_fence: f64,
    pub upper_fence: f64,
    pub outliers: Vec<f64>,
}

fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    sorted[lo] + (sorted[hi] - sorted[lo]) * (pos - lo as f64)
}

impl BoxSummary {
    /// `None` for an empty input.
    pub fn of(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q1 = quantile_sorted(&v, 0.25);
        let q3 = quantile_sorted(&v, 0.75);
        let iqr = q3 - q1;
        let lower_fence = q1 - 1.5 * iqr;
        let upper_fence = q3 + 1.5 * iqr;
        Some(Self {
            count: v.len(),
            min: v[0],
            q1,
            median: quantile_sorted(&v, 0.5),
            q3,
            max: v[v.len() - 1],
            lower_fence,
            upper_fence,
            outliers: v
                .iter()
                .copied()
                .filter(|&x| x < lower_fence || x > upper_fence)
                .collect(),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InfluenceReport {
    pub removed_group: usize,
    /// Full minus ablated accuracy per evaluation group; `None` where the
    /// evaluation group is empty. Empty when the evaluation corpus has no
    /// assignment.
    pub acc_p: Vec<Option<f64>>,
    /// Full minus ablated accuracy per class; `None` for absent classes.
    pub acc_c: Vec<Option<f64>>,
    /// Full minus ablated probability on each evaluation sample's clean label.
    pub infl: Vec<f64>,
    pub full_accuracy: f64,
    pub ablated_accuracy: f64,
    pub acc_p_summary: Option<BoxSummary>,
    pub seed: u64,
    pub config: TrainConfig,
}

impl InfluenceReport {
    pub fn overall_difference(&self) -> f64 {
        self.full_accuracy - self.ablated_accuracy
    }
}

fn diff(a: &[Option<f64>], b: &[Option<f64>]) -> Vec<Option<f64>> {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.zip(*y).map(|(x, y)| x - y))
        .collect()
}

/// Compares a precomputed full-model evaluation with a model trained
/// without group `i`.
pub fn ablation_report(
    full: &Evaluation,
    train_corpus: &LabeledCorpus,
    eval_corpus: &LabeledCorpus,
    i: usize,
    spec: ModelSpec,
    config: &TrainConfig,
) -> Result<InfluenceReport> {
    let reduced = remove_group(train_corpus, i)?;
    if reduced.is_empty() {
        return Err(Error::GroupCoversCorpus(i));
    }
    let ablated = train(&reduced, eval_corpus, spec, config)?.final_eval;
    let acc_p = match (&full.per_group, &ablated.per_group) {
        (Some(a), Some(b)) => diff(a, b),
        _ => Vec::new(),
    };
    let present: Vec<f64> = acc_p.iter().flatten().copied().collect();
    Ok(InfluenceReport {
        removed_group: i,
        acc_c: diff(&full.per_class, &ablated.per_class),
        infl: full
            .clean_label_probs
            .iter()
            .zip(&ablated.clean_label_probs)
            .map(|(a, b)| a - b)
            .collect(),
        acc_p_summary: BoxSummary::of(&present),
        acc_p,
        full_accuracy: full.accuracy,
        ablated_accuracy: ablated.accuracy,
        seed: config.seed,
        config: config.clone(),
    })
}

pub fn influence_of_group(
    train_corpus: &LabeledCorpus,
    eval_corpus: &LabeledCorpus,
    i: usize,
    spec: ModelSpec,
    config: &TrainConfig,
) -> Result<InfluenceReport> {
    remove_group(train_corpus, i)?;
    let full = train(train_corpus, eval_corpus, spec, config)?.final_eval;
    ablation_report(&full, train_corpus, eval_corpus, i, spec, config)
}

/// One report per listed group, training the full model once.
pub fn influence_sweep(
    train_corpus: &LabeledCorpus,
    eval_corpus: &LabeledCorpus,
    groups: &[usize],
    spec: ModelSpec,
    config: &TrainConfig,
) -> Result<Vec<InfluenceReport>> {
    if groups.is_empty() {
        return Ok(Vec::new());
    }
    let full = train(train_corpus, eval_corpus, spec, config)?.final_eval;
    groups
        .iter()
        .map(|&i| ablation_report(&full, train_corpus, eval_corpus, i, spec, config))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::GroupAssignment;

    #[test]
    fn remove_group_keeps_ids() {
        let c = LabeledCorpus::new(
            vec![0.0, 1.0, 2.0, 3.0],
            1,
            None,
            vec![0, 1, 0, 1],
            2,
            Some(GroupAssignment::new(vec![0, 2, 0, 1], 3).unwrap()),
        )
        .unwrap();
        let r = remove_group(&c, 0).unwrap();
        assert_eq!(r.len(), 2);
        assert_eq!(r.groups().unwrap().ids(), &[2, 1]);
        assert_eq!(r.groups().unwrap().group_count(), 3);
        assert!(matches!(
            remove_group(&c, 3),
            Err(Error::UnknownGroup {
                group: 3,
                group_count: 3
            })
        ));
    }

    #[test]
    fn box_summary_of_small_list() {
        let s = BoxSummary::of(&[1.0, 2.0, 3.0, 4.0, 100.0]).unwrap();
        assert_eq!((s.q1, s.median, s.q3), (2.0, 3.0, 4.0));
        assert_eq!(s.outliers, vec![100.0]);
        assert!(BoxSummary::of(&[]).is_none());
    }
}
