//! Long-tailed corpora and synthetic label noise.
//!
//! Class indices are ordered head first: class `0` keeps `n` samples and
//! class `K-1` keeps `n / r`. For the binary Gaussian world the label index
//! [`NEGATIVE`] (`0`) stands for y = −1 and [`POSITIVE`] (`1`) for y = +1, which
//! matches the row order of the 2×2 transition matrices `T_H` and `T_T`.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::corpus::{GroupAssignment, LabeledCorpus};
use crate::error::{Error, Result};
use crate::rng::{self, tag};

pub const NEGATIVE: usize = 0;
pub const POSITIVE: usize = 1;

/// Group ids produced by [`gaussian_mixture`].
pub mod group {
    pub const HEAD_POSITIVE: usize = 0;
    pub const TAIL_POSITIVE: usize = 1;
    pub const HEAD_NEGATIVE: usize = 2;
    pub const TAIL_NEGATIVE: usize = 3;
    pub const COUNT: usize = 4;

    pub fn is_head(g: usize) -> bool {
        g == HEAD_POSITIVE || g == HEAD_NEGATIVE
    }
}

const ROW_TOLERANCE: f64 = 1e-12;

/// Row-stochastic `K×K` matrix with `T[i][j] = P(noisy = j | clean = i)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseTransition {
    k: usize,
    entries: Vec<f64>,
}

impl NoiseTransition {
    pub fn new(k: usize, entries: Vec<f64>) -> Result<Self> {
        if k == 0 || entries.len() != k * k {
            return Err(Error::InvalidTransition(format!(
                "expected {k}x{k} entries, found {}",
                entries.len()
            )));
        }
        for (idx, &v) in entries.iter().enumerate() {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidTransition(format!(
                    "entry ({}, {}) = {v} outside [0, 1]",
                    idx / k,
                    idx % k
                )));
            }
        }
        let t = Self { k, entries };
        for i in 0..k {
            let s: f64 = t.row(i).iter().sum();
            if (s - 1.0).abs() > ROW_TOLERANCE {
                return Err(Error::InvalidTransition(format!("row {i} sums to {s}")));
            }
        }
        Ok(t)
    }

    pub fn identity(k: usize) -> Self {
        let mut entries = vec![0.0; k * k];
        for i in 0..k {
            entries[i * k + i] = 1.0;
        }
        Self { k, entries }
    }

    /// Binary matrix in the (−, +) row order:
    /// `[[1-ρ⁻, ρ⁻], [ρ⁺, 1-ρ⁺]]`.
    pub fn binary(rho_minus: f64, rho_plus: f64) -> Result<Self> {
        Self::new(
            2,
            vec![1.0 - rho_minus, rho_minus, rho_plus, 1.0 - rho_plus],
        )
    }

    pub fn class_count(&self) -> usize {
        self.k
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.k + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.k..(i + 1) * self.k]
    }

    pub fn max_off_diagonal(&self) -> f64 {
        let mut m: f64 = 0.0;
        for i in 0..self.k {
            for j in 0..self.k {
                if i != j {
                    m = m.max(self.get(i, j));
                }
            }
        }
        m
    }

    /// Draws a noisy label for clean label `clean` from uniform `u ∈ [0,1)`.
    fn sample_row(&self, clean: usize, u: f64) -> usize {
        let mut acc = 0.0;
        let row = self.row(clean);
        for (j, &p) in row.iter().enumerate() {
            acc += p;
            if u < acc {
                return j;
            }
        }
        // u landed in the rounding slack above the cumulative sum
        row.iter().rposition(|&p| p > 0.0).unwrap_or(clean)
    }
}

/// Exponential per-class decay from `base_count` down to `base_count / r`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LongTailSpec {
    pub base_count: usize,
    pub imbalance_ratio: f64,
    pub class_count: usize,
}

impl LongTailSpec {
    fn check(&self) -> Result<()> {
        if self.base_count < 1 {
            return Err(Error::InvalidParameter(
                "base_count must be at least 1".into(),
            ));
        }
        if !(self.imbalance_ratio >= 1.0) || !self.imbalance_ratio.is_finite() {
            return Err(Error::InvalidParameter(format!(
                "imbalance ratio must be >= 1, got {}",
                self.imbalance_ratio
            )));
        }
        if self.class_count < 2 {
            return Err(Error::InvalidParameter(
                "class count must be at least 2".into(),
            ));
        }
        Ok(())
    }
}

/// `floor(n / r^((k-1)/(K-1)))` for `k = 1..K`, clamped below at 1.
pub fn longtail_counts(spec: &LongTailSpec) -> Result<Vec<usize>> {
    spec.check()?;
    let kk = spec.class_count;
    let n = spec.base_count as f64;
    Ok((0..kk)
        .map(|k| {
            let e = k as f64 / (kk - 1) as f64;
            ((n / spec.imbalance_ratio.powf(e)).floor() as usize).max(1)
        })
        .collect())
}

/// Keeps `longtail_counts(spec)[c]` rows of every clean class `c`, drawn
/// uniformly without replacement. Rows stay in their original order.
pub fn subsample_longtail(
    corpus: &LabeledCorpus,
    spec: &LongTailSpec,
    seed: u64,
) -> Result<LabeledCorpus> {
    corpus.ensure_valid()?;
    if spec.class_count != corpus.class_count() {
        return Err(Error::InvalidParameter(format!(
            "long-tail spec has {} classes, corpus has {}",
            spec.class_count,
            corpus.class_count()
        )));
    }
    let targets = longtail_counts(spec)?;
    let clean = corpus.require_clean()?;
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); corpus.class_count()];
    for (i, &y) in clean.iter().enumerate() {
        by_class[y].push(i);
    }
    let mut keep = Vec::with_capacity(targets.iter().sum());
    for (class, (members, &target)) in by_class.iter().zip(&targets).enumerate() {
        if members.len() < target {
            return Err(Error::InsufficientClassPopulation {
                class,
                available: members.len(),
                required: target,
            });
        }
        let mut rng = rng::stream(seed, tag::SUBSAMPLE, class as u32);
        keep.extend(
            index::sample(&mut rng, members.len(), target)
                .into_iter()
                .map(|j| members[j]),
        );
    }
    keep.sort_unstable();
    Ok(corpus.select(&keep))
}

/// Symmetric noise: `1-ρ` on the diagonal, `ρ/(K-1)` elsewhere.
pub fn sym_transition(k: usize, rho: f64) -> Result<NoiseTransition> {
    if k < 2 {
        return Err(Error::InvalidParameter(
            "class count must be at least 2".into(),
        ));
    }
    check_rho(rho)?;
    let off = rho / (k - 1) as f64;
    let mut entries = vec![off; k * k];
    for i in 0..k {
        entries[i * k + i] = 1.0 - rho;
    }
    NoiseTransition::new(k, entries)
}

/// Imbalance noise: flips land on class `j` in proportion to its prior,
/// `T[i][j] = priors[j]·ρ / (1 - priors[i])` for `j ≠ i`.
pub fn imb_transition(k: usize, rho: f64, priors: &[f64]) -> Result<NoiseTransition> {
    if k < 2 {
        return Err(Error::InvalidParameter(
            "class count must be at least 2".into(),
        ));
    }
    check_rho(rho)?;
    if priors.len() != k {
        return Err(Error::LengthMismatch {
            expected: k,
            found: priors.len(),
        });
    }
    if priors.iter().any(|&p| !(p > 0.0)) {
        return Err(Error::InvalidParameter("priors must be positive".into()));
    }
    let total: f64 = priors.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::InvalidParameter(format!(
            "priors sum to {total}, expected 1"
        )));
    }
    let mut entries = vec![0.0; k * k];
    for i in 0..k {
        let rest = 1.0 - priors[i];
        if rest <= 1e-12 {
            return Err(Error::DegeneratePrior { class: i });
        }
        for j in 0..k {
            entries[i * k + j] = if i == j {
                1.0 - rho
            } else {
                priors[j] * rho / rest
            };
        }
    }
    NoiseTransition::new(k, entries)
}

/// Empirical clean-label frequencies, used as the default Imb priors.
pub fn class_priors(corpus: &LabeledCorpus) -> Vec<f64> {
    let counts = corpus.summary().per_class_counts;
    let n: usize = counts.iter().sum();
    counts.iter().map(|&c| c as f64 / n.max(1) as f64).collect()
}

fn check_rho(rho: f64) -> Result<()> {
    if !(0.0..1.0).contains(&rho) {
        return Err(Error::InvalidParameter(format!(
            "noise rate must lie in [0, 1), got {rho}"
        )));
    }
    Ok(())
}

/// Draws every noisy label independently from row `T[clean]`.
pub fn apply_noise(clean_labels: &[usize], t: &NoiseTransition, seed: u64) -> Result<Vec<usize>> {
    if let Some(&bad) = clean_labels.iter().find(|&&y| y >= t.class_count()) {
        return Err(Error::InvalidParameter(format!(
            "label {bad} outside transition matrix of size {}",
            t.class_count()
        )));
    }
    let mut rng = rng::stream(seed, tag::LABEL_NOISE, 0);
    Ok(clean_labels
        .iter()
        .map(|&y| t.sample_row(y, rng.random::<f64>()))
        .collect())
}

/// Replaces the noisy labels of `corpus` by a draw from `T[clean]`.
pub fn noisify(corpus: &LabeledCorpus, t: &NoiseTransition, seed: u64) -> Result<LabeledCorpus> {
    let noisy = apply_noise(corpus.require_clean()?, t, seed)?;
    corpus.with_noisy_labels(noisy)
}

/// Two one-dimensional Gaussian classes with a shared scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianMixtureSpec {
    pub mu_plus: f64,
    pub mu_minus: f64,
    pub sigma: f64,
    pub eta: f64,
    pub count_plus: usize,
    pub count_minus: usize,
}

impl GaussianMixtureSpec {
    fn check(&self) -> Result<()> {
        if !(self.mu_plus > self.mu_minus) {
            return Err(Error::InvalidParameter(
                "mu_plus must exceed mu_minus".into(),
            ));
        }
        if !(self.sigma > 0.0) {
            return Err(Error::InvalidParameter("sigma must be positive".into()));
        }
        if !(self.eta >= 0.0) {
            return Err(Error::InvalidParameter("eta must be nonnegative".into()));
        }
        Ok(())
    }
}

/// Standardized offset toward the opposite class: `(x - μ_y)/σ · sign(y)`.
/// A sample is in the head of its class when this is `>= -η`.
pub fn head_score(x: f64, y: usize, mu_plus: f64, mu_minus: f64, sigma: f64) -> f64 {
    if y == POSITIVE {
        (x - mu_plus) / sigma
    } else {
        -(x - mu_minus) / sigma
    }
}

/// Samples `count_plus` points from `N(μ₊, σ²)` followed by `count_minus`
/// from `N(μ₋, σ²)` and tags each as head or tail of its class. Noisy labels
/// start equal to the clean ones.
pub fn gaussian_mixture(spec: &GaussianMixtureSpec, seed: u64) -> Result<LabeledCorpus> {
    spec.check()?;
    let n = spec.count_plus + spec.count_minus;
    let mut rng = rng::stream(seed, tag::GAUSSIAN_DRAW, 0);
    let std = Normal::new(0.0, 1.0).expect("unit normal");
    let mut features = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    for i in 0..n {
        let (y, mu) = if i < spec.count_plus {
            (POSITIVE, spec.mu_plus)
        } else {
            (NEGATIVE, spec.mu_minus)
        };
        let x = mu + spec.sigma * std.sample(&mut rng);
        let head = head_score(x, y, spec.mu_plus, spec.mu_minus, spec.sigma) >= -spec.eta;
        let g = match (y == POSITIVE, head) {
            (true, true) => group::HEAD_POSITIVE,
            (true, false) => group::TAIL_POSITIVE,
            (false, true) => group::HEAD_NEGATIVE,
            (false, false) => group::TAIL_NEGATIVE,
        };
        features.push(x);
        labels.push(y);
        groups.push(g);
    }
    let groups = GroupAssignment::new(groups, group::COUNT)?;
    LabeledCorpus::new(features, 1, Some(labels.clone()), labels, 2, Some(groups))
}

/// Flips head rows through `T_H` and tail rows through `T_T`. Head/tail
/// membership comes from the clean label, so the assignment is unchanged.
pub fn population_noise(
    corpus: &LabeledCorpus,
    t_head: &NoiseTransition,
    t_tail: &NoiseTransition,
    seed: u64,
) -> Result<LabeledCorpus> {
    corpus.ensure_valid()?;
    for t in [t_head, t_tail] {
        if t.class_count() != 2 {
            return Err(Error::InvalidTransition(
                "population noise needs 2x2 matrices".into(),
            ));
        }
        let m = t.max_off_diagonal();
        if m >= 0.5 {
            return Err(Error::NoiseRateTooLarge(m));
        }
    }
    let groups = corpus.require_groups()?;
    if groups.group_count() != group::COUNT {
        return Err(Error::InvalidParameter(
            "population noise needs the 4-group head/tail assignment".into(),
        ));
    }
    let clean = corpus.require_clean()?;
    let mut rng = rng::stream(seed, tag::POPULATION_NOISE, 0);
    let noisy = clean
        .iter()
        .zip(groups.ids())
        .map(|(&y, &g)| {
            let t = if group::is_head(g) { t_head } else { t_tail };
            t.sample_row(y, rng.random::<f64>())
        })
        .collect();
    corpus.with_noisy_labels(noisy)
}

/// Isotropic Gaussian blobs, one per class, `per_class[c]` points each.
/// Used for clean class-balanced pools before long-tail subsampling.
pub fn gaussian_blobs(
    centers: &[Vec<f64>],
    sigma: f64,
    per_class: &[usize],
    seed: u64,
) -> Result<LabeledCorpus> {
    if centers.len() != per_class.len() || centers.len() < 2 {
        return Err(Error::InvalidParameter(
            "need one count per center and at least 2 centers".into(),
        ));
    }
    let d = centers[0].len();
    if d == 0 || centers.iter().any(|c| c.len() != d) {
        return Err(Error::InvalidParameter(
            "centers must share a positive dimension".into(),
        ));
    }
    if !(sigma > 0.0) {
        return Err(Error::InvalidParameter("sigma must be positive".into()));
    }
    let normal = Normal::new(0.0, sigma).expect("positive sigma");
    let mut rng = rng::stream(seed, tag::FEATURE_DRAW, 0);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (c, (center, &count)) in centers.iter().zip(per_class).enumerate() {
        for _ in 0..count {
            features.extend(center.iter().map(|&m| m + normal.sample(&mut rng)));
            labels.push(c);
        }
    }
    LabeledCorpus::clean(features, d, labels, centers.len())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn balanced_pool(k: usize, per: usize) -> LabeledCorpus {
        let labels: Vec<usize> = (0..k)
            .flat_map(|c| std::iter::repeat(c).take(per))
            .collect();
        let n = labels.len();
        LabeledCorpus::clean((0..n).map(|i| i as f64).collect(), 1, labels, k).unwrap()
    }

    #[test]
    fn no_decay_when_ratio_is_one() {
        let c = longtail_counts(&LongTailSpec {
            base_count: 5000,
            imbalance_ratio: 1.0,
            class_count: 10,
        })
        .unwrap();
        assert_eq!(c, vec![5000; 10]);
    }

    #[test]
    fn ratio_100_over_10_classes() {
        let c = longtail_counts(&LongTailSpec {
            base_count: 5000,
            imbalance_ratio: 100.0,
            class_count: 10,
        })
        .unwrap();
        assert_eq!(c[0], 5000);
        assert_eq!(c[9], 50);
        // direct evaluation, k = 2: 5000 / 100^(1/9) = 2997.42...
        assert_eq!(c[1], 2997);
    }

    #[test]
    fn ratio_100_over_100_classes_is_monotone() {
        let c = longtail_counts(&LongTailSpec {
            base_count: 5000,
            imbalance_ratio: 100.0,
            class_count: 100,
        })
        .unwrap();
        assert_eq!(c[99], 50);
        assert!(c.windows(2).all(|w| w[0] >= w[1]));
    }

    #[test]
    fn counts_clamped_at_one() {
        let c = longtail_counts(&LongTailSpec {
            base_count: 3,
            imbalance_ratio: 1000.0,
            class_count: 3,
        })
        .unwrap();
        assert_eq!(c, vec![3, 1, 1]);
    }

    #[test]
    fn invalid_longtail_specs() {
        assert!(longtail_counts(&LongTailSpec {
            base_count: 0,
            imbalance_ratio: 2.0,
            class_count: 3
        })
        .is_err());
        assert!(longtail_counts(&LongTailSpec {
            base_count: 5,
            imbalance_ratio: 0.5,
            class_count: 3
        })
        .is_err());
    }

    #[test]
    fn subsample_with_ratio_one_keeps_everything() {
        let pool = balanced_pool(10, 50);
        let spec = LongTailSpec {
            base_count: 50,
            imbalance_ratio: 1.0,
            class_count: 10,
        };
        assert_eq!(subsample_longtail(&pool, &spec, 3).unwrap(), pool);
    }

    #[test]
    fn subsample_hits_targets_and_is_deterministic() {
        let pool = balanced_pool(10, 5000);
        let spec = LongTailSpec {
            base_count: 5000,
            imbalance_ratio: 100.0,
            class_count: 10,
        };
        let a = subsample_longtail(&pool, &spec, 11).unwrap();
        assert_eq!(
            a.summary().per_class_counts,
            longtail_counts(&spec).unwrap()
        );
        assert_eq!(a, subsample_longtail(&pool, &spec, 11).unwrap());
        assert_ne!(a, subsample_longtail(&pool, &spec, 12).unwrap());
    }

    #[test]
    fn subsample_reports_insufficient_population() {
        let pool = balanced_pool(3, 10);
        let spec = LongTailSpec {
            base_count: 11,
            imbalance_ratio: 1.0,
            class_count: 3,
        };
        let err = subsample_longtail(&pool, &spec, 0).unwrap_err();
        assert!(matches!(
            err,
            Error::InsufficientClassPopulation {
                class: 0,
                available: 10,
                required: 11
            }
        ));
    }

    #[test]
    fn sym_zero_is_identity() {
        assert_eq!(
            sym_transition(10, 0.0).unwrap(),
            NoiseTransition::identity(10)
        );
    }

    #[test]
    fn sym_entries() {
        let t = sym_transition(10, 0.2).unwrap();
        assert_eq!(t.get(3, 3), 0.8);
        assert!((t.get(3, 4) - 0.2 / 9.0).abs() < 1e-15);
        assert!((t.get(0, 1) - 0.022222).abs() < 1e-6);
    }

    #[test]
    fn imb_with_uniform_priors_matches_sym() {
        let priors = vec![0.1; 10];
        let a = imb_transition(10, 0.2, &priors).unwrap();
        let b = sym_transition(10, 0.2).unwrap();
        for i in 0..10 {
            for j in 0..10 {
                assert!((a.get(i, j) - b.get(i, j)).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn imb_zero_rate_is_identity() {
        let t = imb_transition(3, 0.0, &[0.5, 0.3, 0.2]).unwrap();
        assert_eq!(t, NoiseTransition::identity(3));
    }

    #[test]
    fn imb_prefers_frequent_targets() {
        let t = imb_transition(3, 0.3, &[0.6, 0.3, 0.1]).unwrap();
        assert!(t.get(2, 0) > t.get(2, 1));
        assert!((t.get(2, 0) - 0.6 * 0.3 / 0.9).abs() < 1e-15);
    }

    #[test]
    fn imb_rejects_degenerate_prior() {
        let err = imb_transition(2, 0.2, &[1.0 - 1e-13, 1e-13]).unwrap_err();
        assert!(matches!(err, Error::DegeneratePrior { class: 0 }));
    }

    #[test]
    fn identity_noise_is_a_no_op() {
        let labels: Vec<usize> = (0..100).map(|i| i % 7).collect();
        assert_eq!(
            apply_noise(&labels, &NoiseTransition::identity(7), 9).unwrap(),
            labels
        );
    }

    #[test]
    fn noise_is_deterministic() {
        let labels: Vec<usize> = (0..1000).map(|i| i % 10).collect();
        let t = sym_transition(10, 0.5).unwrap();
        assert_eq!(
            apply_noise(&labels, &t, 4).unwrap(),
            apply_noise(&labels, &t, 4).unwrap()
        );
    }

    #[test]
    fn huge_eta_puts_everything_in_head() {
        let spec = GaussianMixtureSpec {
            mu_plus: 5.0,
            mu_minus: -5.0,
            sigma: 1.0,
            eta: 1e6,
            count_plus: 500,
            count_minus: 500,
        };
        let c = gaussian_mixture(&spec, 1).unwrap();
        assert!(c.groups().unwrap().ids().iter().all(|&g| group::is_head(g)));
        assert_eq!(c, gaussian_mixture(&spec, 1).unwrap());
    }

    #[test]
    fn head_tail_tags_follow_definition() {
        let spec = GaussianMixtureSpec {
            mu_plus: 1.0,
            mu_minus: -1.0,
            sigma: 2.0,
            eta: 0.5,
            count_plus: 300,
            count_minus: 300,
        };
        let c = gaussian_mixture(&spec, 2).unwrap();
        for i in 0..c.len() {
            let x = c.row(i)[0];
            let g = c.groups().unwrap().ids()[i];
            match c.clean_labels().unwrap()[i] {
                POSITIVE => assert_eq!(g == group::TAIL_POSITIVE, (x - 1.0) / 2.0 < -0.5),
                _ => assert_eq!(g == group::TAIL_NEGATIVE, (x + 1.0) / 2.0 > 0.5),
            }
        }
    }

    #[test]
    fn population_noise_identity_and_rejection() {
        let spec = GaussianMixtureSpec {
            mu_plus: 5.0,
            mu_minus: -5.0,
            sigma: 1.0,
            eta: 1.0,
            count_plus: 200,
            count_minus: 200,
        };
        let c = gaussian_mixture(&spec, 5).unwrap();
        let id = NoiseTransition::identity(2);
        let same = population_noise(&c, &id, &id, 3).unwrap();
        assert_eq!(same.noisy_labels(), same.clean_labels().unwrap());
        let bad = NoiseTransition::binary(0.1, 0.5).unwrap();
        assert!(matches!(
            population_noise(&c, &id, &bad, 3),
            Err(Error::NoiseRateTooLarge(_))
        ));
    }

    #[test]
    fn binary_matrix_layout() {
        let t = NoiseTransition::binary(0.1, 0.3).unwrap();
        assert_eq!(t.get(NEGATIVE, POSITIVE), 0.1);
        assert_eq!(t.get(POSITIVE, NEGATIVE), 0.3);
    }

    #[test]
    fn non_stochastic_rows_rejected() {
        assert!(NoiseTransition::new(2, vec![0.5, 0.4, 0.0, 1.0]).is_err());
        assert!(NoiseTransition::new(2, vec![1.5, -0.5, 0.0, 1.0]).is_err());
    }
}
