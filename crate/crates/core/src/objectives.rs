//! Per-sample classification losses and the fairness regularizer.
//!
//! Every loss comes in two forms: a value function and a `*_grad` function
//! returning `(value, ∂value/∂logits)`. Probabilities are computed with a
//! max-shifted softmax and log-probabilities with log-sum-exp, so large
//! logits never overflow.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const DEFAULT_LS_ALPHA: f64 = 0.1;
pub const DEFAULT_NLS_ALPHA: f64 = -0.2;
pub const DEFAULT_FOCAL_GAMMA: f64 = 2.0;
pub const DEFAULT_LOGIT_TAU: f64 = 1.0;
pub const DEFAULT_PEER_WEIGHT: f64 = 1.0;

fn log_sum_exp(z: &[f64]) -> f64 {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + z.iter().map(|&v| (v - m).exp()).sum::<f64>().ln()
}

pub fn softmax_probs(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|&v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn check_label(logits: &[f64], label: usize) -> Result<()> {
    if label >= logits.len() {
        return Err(Error::InvalidParameter(format!(
            "label {label} outside {} classes",
            logits.len()
        )));
    }
    Ok(())
}

fn hyper(ok: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidHyperparameter(msg()))
    }
}

/// Cross-entropy against a (possibly non-one-hot) target distribution.
fn soft_ce_grad(logits: &[f64], target: &[f64]) -> (f64, Vec<f64>) {
    let lse = log_sum_exp(logits);
    let p = softmax_probs(logits);
    let value = logits
        .iter()
        .zip(target)
        .map(|(&z, &q)| -q * (z - lse))
        .sum();
    let sum_q: f64 = target.iter().sum();
    let grad = p
        .iter()
        .zip(target)
        .map(|(&pk, &q)| sum_q * pk - q)
        .collect();
    (value, grad)
}

pub fn ce_loss_grad(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    check_label(logits, label)?;
    let value = log_sum_exp(logits) - logits[label];
    let mut grad = softmax_probs(logits);
    grad[label] -= 1.0;
    Ok((value, grad))
}

pub fn ce_loss(logits: &[f64], label: usize) -> Result<f64> {
    ce_loss_grad(logits, label).map(|r| r.0)
}

fn smoothed_target(k: usize, label: usize, alpha: f64) -> Vec<f64> {
    let mut q = vec![alpha / k as f64; k];
    q[label] += 1.0 - alpha;
    q
}

/// Label smoothing: cross-entropy against `(1-α)·onehot + α/K`, `α ∈ [0,1)`.
pub fn ls_loss_grad(logits: &[f64], label: usize, alpha: f64) -> Result<(f64, Vec<f64>)> {
    check_label(logits, label)?;
    hyper((0.0..1.0).contains(&alpha), || {
        format!("label smoothing alpha must lie in [0, 1), got {alpha}")
    })?;
    Ok(soft_ce_grad(
        logits,
        &smoothed_target(logits.len(), label, alpha),
    ))
}

pub fn ls_loss(logits: &[f64], label: usize, alpha: f64) -> Result<f64> {
    ls_loss_grad(logits, label, alpha).map(|r| r.0)
}

/// Negative label smoothing: the label smoothing target with `α < 0`.
pub fn nls_loss_grad(logits: &[f64], label: usize, alpha: f64) -> Result<(f64, Vec<f64>)> {
    check_label(logits, label)?;
    hyper(alpha < 0.0 && alpha.is_finite(), || {
        format!("negative label smoothing alpha must be < 0, got {alpha}")
    })?;
    Ok(soft_ce_grad(
        logits,
        &smoothed_target(logits.len(), label, alpha),
    ))
}

pub fn nls_loss(logits: &[f64], label: usize, alpha: f64) -> Result<f64> {
    nls_loss_grad(logits, label, alpha).map(|r| r.0)
}

/// Focal loss `-(1-p_y)^γ · log p_y`. The gradient is taken as zero where
/// `1 - p_y` is exactly zero.
pub fn focal_loss_grad(logits: &[f64], label: usize, gamma: f64) -> Result<(f64, Vec<f64>)> {
    check_label(logits, label)?;
    hyper(gamma >= 0.0 && gamma.is_finite(), || {
        format!("focal gamma must be >= 0, got {gamma}")
    })?;
    if gamma == 0.0 {
        return ce_loss_grad(logits, label);
    }
    let p = softmax_probs(logits);
    let log_py = logits[label] - log_sum_exp(logits);
    let py = p[label];
    // 1 - p_y without cancellation when p_y is close to 1
    let u: f64 = p
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != label)
        .map(|(_, &v)| v)
        .sum();
    let value = -u.powf(gamma) * log_py;
    if u == 0.0 {
        return Ok((value, vec![0.0; logits.len()]));
    }
    let dl_dpy = gamma * u.powf(gamma - 1.0) * log_py - u.powf(gamma) / py;
    let grad = p
        .iter()
        .enumerate()
        .map(|(j, &pj)| {
            let dpy_dzj = if j == label {
                py * (1.0 - py)
            } else {
                -py * pj
            };
            dl_dpy * dpy_dzj
        })
        .collect();
    Ok((value, grad))
}

pub fn focal_loss(logits: &[f64], label: usize, gamma: f64) -> Result<f64> {
    focal_loss_grad(logits, label, gamma).map(|r| r.0)
}

/// Logit-adjusted cross-entropy: `τ·log prior_k` is added to every logit
/// before the softmax.
pub fn logit_adjusted_loss_grad(
    logits: &[f64],
    label: usize,
    priors: &[f64],
    tau: f64,
) -> Result<(f64, Vec<f64>)> {
    check_label(logits, label)?;
    hyper(tau >= 0.0 && tau.is_finite(), || {
        format!("logit adjustment tau must be >= 0, got {tau}")
    })?;
    if priors.len() != logits.len() {
        return Err(Error::LengthMismatch {
            expected: logits.len(),
            found: priors.len(),
        });
    }
    hyper(priors.iter().all(|&p| p > 0.0), || {
        "logit adjustment priors must be positive".into()
    })?;
    let total: f64 = priors.iter().sum();
    hyper((total - 1.0).abs() <= 1e-9, || {
        format!("logit adjustment priors sum to {total}")
    })?;
    let adjusted: Vec<f64> = logits
        .iter()
        .zip(priors)
        .map(|(&z, &p)| z + tau * p.ln())
        .collect();
    ce_loss_grad(&adjusted, label)
}

pub fn logit_adjusted_loss(logits: &[f64], label: usize, priors: &[f64], tau: f64) -> Result<f64> {
    logit_adjusted_loss_grad(logits, label, priors, tau).map(|r| r.0)
}

/// Peer loss `ce(z, y) - w·ce(z_peer, y_peer)`. Returns the value and the
/// gradients with respect to both logit vectors.
pub fn peer_loss_grad(
    logits: &[f64],
    label: usize,
    peer_logits: &[f64],
    peer_label: usize,
    weight: f64,
) -> Result<(f64, Vec<f64>, Vec<f64>)> {
    hyper(weight >= 0.0 && weight.is_finite(), || {
        format!("peer weight must be >= 0, got {weight}")
    })?;
    let (a, ga) = ce_loss_grad(logits, label)?;
    let (b, gb) = ce_loss_grad(peer_logits, peer_label)?;
    Ok((
        a - weight * b,
        ga,
        gb.into_iter().map(|g| -weight * g).collect(),
    ))
}

pub fn peer_loss(
    logits: &[f64],
    label: usize,
    peer_logits: &[f64],
    peer_label: usize,
    weight: f64,
) -> Result<f64> {
    peer_loss_grad(logits, label, peer_logits, peer_label, weight).map(|r| r.0)
}

/// Base loss selection with its hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LossKind {
    Ce,
    Ls { alpha: f64 },
    Nls { alpha: f64 },
    Focal { gamma: f64 },
    LogitAdj { tau: f64 },
    Peer { weight: f64 },
}

impl LossKind {
    /// Looks up a loss by its config name with default hyperparameters.
    pub fn from_name(name: &str) -> Result<Self> {
        Ok(match name {
            "ce" => LossKind::Ce,
            "ls" => LossKind::Ls {
                alpha: DEFAULT_LS_ALPHA,
            },
            "nls" => LossKind::Nls {
                alpha: DEFAULT_NLS_ALPHA,
            },
            "focal" => LossKind::Focal {
                gamma: DEFAULT_FOCAL_GAMMA,
            },
            "logit_adj" => LossKind::LogitAdj {
                tau: DEFAULT_LOGIT_TAU,
            },
            "peer" => LossKind::Peer {
                weight: DEFAULT_PEER_WEIGHT,
            },
            other => {
                return Err(Error::InvalidHyperparameter(format!(
                    "unknown loss kind {other:?} (expected ce, ls, nls, focal, logit_adj or peer)"
                )))
            }
        })
    }

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Ce => "ce",
            LossKind::Ls { .. } => "ls",
            LossKind::Nls { .. } => "nls",
            LossKind::Focal { .. } => "focal",
            LossKind::LogitAdj { .. } => "logit_adj",
            LossKind::Peer { .. } => "peer",
        }
    }

    pub fn validate(&self) -> Result<()> {
        let z = [0.0, 0.0];
        match *self {
            LossKind::Ce => Ok(()),
            LossKind::Ls { alpha } => ls_loss(&z, 0, alpha).map(drop),
            LossKind::Nls { alpha } => nls_loss(&z, 0, alpha).map(drop),
            LossKind::Focal { gamma } => focal_loss(&z, 0, gamma).map(drop),
            LossKind::LogitAdj { tau } => logit_adjusted_loss(&z, 0, &[0.5, 0.5], tau).map(drop),
            LossKind::Peer { weight } => peer_loss(&z, 0, &z, 0, weight).map(drop),
        }
    }

    /// Value and logit gradient for every kind except peer loss, which needs
    /// a peer sample and goes through [`peer_loss_grad`]. `priors` is only
    /// read by the logit-adjusted loss.
    pub fn value_grad(
        &self,
        logits: &[f64],
        label: usize,
        priors: &[f64],
    ) -> Result<(f64, Vec<f64>)> {
        match *self {
            LossKind::Ce | LossKind::Peer { .. } => ce_loss_grad(logits, label),
            LossKind::Ls { alpha } => ls_loss_grad(logits, label, alpha),
            LossKind::Nls { alpha } => nls_loss_grad(logits, label, alpha),
            LossKind::Focal { gamma } => focal_loss_grad(logits, label, gamma),
            LossKind::LogitAdj { tau } => logit_adjusted_loss_grad(logits, label, priors, tau),
        }
    }
}

/// Per-group multipliers of the fairness regularizer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum FrLambda {
    Shared(f64),
    PerGroup(Vec<f64>),
}

/// Fairness regularizer settings. Group means are taken over the samples in
/// scope: the mini-batch during training and the whole corpus in
/// evaluation. Groups with no sample in scope contribute nothing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrConfig {
    pub lambda: FrLambda,
}

impl FrConfig {
    pub fn shared(lambda: f64) -> Self {
        Self {
            lambda: FrLambda::Shared(lambda),
        }
    }

    pub fn per_group(lambdas: Vec<f64>) -> Self {
        Self {
            lambda: FrLambda::PerGroup(lambdas),
        }
    }

    pub fn off() -> Self {
        Self::shared(0.0)
    }

    /// Multiplier of group `g`; groups past the end of a per-group list get 0.
    pub fn lambda(&self, g: usize) -> f64 {
        match &self.lambda {
            FrLambda::Shared(l) => *l,
            FrLambda::PerGroup(v) => v.get(g).copied().unwrap_or(0.0),
        }
    }

    pub fn is_active(&self) -> bool {
        match &self.lambda {
            FrLambda::Shared(l) => *l > 0.0,
            FrLambda::PerGroup(v) => v.iter().any(|&l| l > 0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = match &self.lambda {
            FrLambda::Shared(l) => *l >= 0.0 && l.is_finite(),
            FrLambda::PerGroup(v) => v.iter().all(|l| *l >= 0.0 && l.is_finite()),
        };
        hyper(ok, || "fairness multipliers must be finite and >= 0".into())
    }
}

struct GroupGaps {
    counts: Vec<usize>,
    gaps: Vec<f64>,
}

fn group_gaps(probs: &[f64], group_ids: &[usize]) -> GroupGaps {
    let k = group_ids.iter().max().map_or(0, |m| m + 1);
    let mut sums = vec![0.0; k];
    let mut counts = vec![0usize; k];
    let mut total = 0.0;
    // shifted by the first value so equal probabilities give exact zeros;
    // group and overall sums accumulate in the same order, so a group
    // holding every sample has exactly the overall mean
    let shift = probs.first().copied().unwrap_or(0.0);
    for (&p, &g) in probs.iter().zip(group_ids) {
        let p = p - shift;
        sums[g] += p;
        counts[g] += 1;
        total += p;
    }
    let overall = total / probs.len() as f64;
    let gaps = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c == 0 { 0.0 } else { s / c as f64 - overall })
        .collect();
    GroupGaps { counts, gaps }
}

/// `Σ_g λ_g · |mean_g(p) − mean(p)|` over the groups present in scope, where
/// `p` holds each sample's predicted probability of its noisy label.
pub fn fr_penalty(noisy_label_probs: &[f64], group_ids: &[usize], config: &FrConfig) -> f64 {
    if noisy_label_probs.is_empty() {
        return 0.0;
    }
    let gg = group_gaps(noisy_label_probs, group_ids);
    gg.gaps
        .iter()
        .zip(&gg.counts)
        .enumerate()
        .filter(|(_, (_, &c))| c > 0)
        .map(|(g, (gap, _))| config.lambda(g) * gap.abs())
        .sum()
}

/// Penalty value and its gradient with respect to every probability, using
/// subgradient 0 where a gap is exactly zero.
pub fn fr_penalty_grad(
    noisy_label_probs: &[f64],
    group_ids: &[usize],
    config: &FrConfig,
) -> (f64, Vec<f64>) {
    let m = noisy_label_probs.len();
    if m == 0 {
        return (0.0, Vec::new());
    }
    let gg = group_gaps(noisy_label_probs, group_ids);
    let mut value = 0.0;
    // coef[g] = λ_g·sgn(gap_g); every sample also feels −Σ coef / M
    let mut coef = vec![0.0; gg.gaps.len()];
    for (g, (&gap, &c)) in gg.gaps.iter().zip(&gg.counts).enumerate() {
        if c == 0 {
            continue;
        }
        let l = config.lambda(g);
        value += l * gap.abs();
        coef[g] = if gap > 0.0 {
            l
        } else if gap < 0.0 {
            -l
        } else {
            0.0
        };
    }
    let shared: f64 = coef.iter().sum::<f64>() / m as f64;
    let grad = group_ids
        .iter()
        .map(|&g| coef[g] / gg.counts[g] as f64 - shared)
        .collect();
    (value, grad)
}

/// Mean base loss plus the fairness penalty.
pub fn combined_objective(
    base_losses: &[f64],
    noisy_label_probs: &[f64],
    group_ids: &[usize],
    config: &FrConfig,
) -> f64 {
    let mean = base_losses.iter().sum::<f64>() / base_losses.len().max(1) as f64;
    mean + fr_penalty(noisy_label_probs, group_ids, config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_cases() {
        assert_eq!(softmax_probs(&[0.0; 4]), vec![0.25; 4]);
        let p = softmax_probs(&[1000.0, 0.0]);
        assert!(p[0] == 1.0 && p[1] >= 0.0 && p[1] < 1e-300);
    }

    #[test]
    fn ce_uniform() {
        assert!((ce_loss(&[0.0; 10], 3).unwrap() - 10f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn reductions_to_ce() {
        let z = [0.3, -1.2, 2.0, 0.7];
        let ce = ce_loss(&z, 2).unwrap();
        assert!((ls_loss(&z, 2, 0.0).unwrap() - ce).abs() < 1e-14);
        assert_eq!(focal_loss(&z, 2, 0.0).unwrap(), ce);
        assert_eq!(
            logit_adjusted_loss(&z, 2, &[0.1, 0.2, 0.3, 0.4], 0.0).unwrap(),
            ce
        );
        assert_eq!(peer_loss(&z, 2, &[5.0, 0.0, 0.0, 1.0], 1, 0.0).unwrap(), ce);
    }

    #[test]
    fn hyperparameter_ranges() {
        let z = [0.0, 1.0];
        assert!(matches!(
            ls_loss(&z, 0, 1.0),
            Err(Error::InvalidHyperparameter(_))
        ));
        assert!(matches!(
            nls_loss(&z, 0, 0.0),
            Err(Error::InvalidHyperparameter(_))
        ));
        assert!(matches!(
            focal_loss(&z, 0, -1.0),
            Err(Error::InvalidHyperparameter(_))
        ));
        assert!(matches!(
            logit_adjusted_loss(&z, 0, &[0.5, 0.5], -0.1),
            Err(Error::InvalidHyperparameter(_))
        ));
        assert!(matches!(
            peer_loss(&z, 0, &z, 1, -1.0),
            Err(Error::InvalidHyperparameter(_))
        ));
    }

    #[test]
    fn focal_at_certain_prediction_has_zero_gradient() {
        let (v, g) = focal_loss_grad(&[800.0, 0.0, 0.0], 0, 2.0).unwrap();
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn fr_two_groups() {
        let cfg = FrConfig::shared(1.0);
        let v = fr_penalty(&[1.0, 1.0, 0.0, 0.0], &[0, 0, 1, 1], &cfg);
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn fr_constant_and_single_group() {
        let cfg = FrConfig::shared(3.0);
        assert_eq!(fr_penalty(&[0.4; 7], &[0, 1, 2, 0, 1, 2, 2], &cfg), 0.0);
        assert_eq!(
            fr_penalty(&[0.1, 0.7, 0.33, 0.9, 0.123], &[0; 5], &cfg),
            0.0
        );
    }

    #[test]
    fn fr_skips_absent_groups() {
        let cfg = FrConfig::per_group(vec![1.0, 5.0, 1.0]);
        // group 1 has no sample here
        let v = fr_penalty(&[1.0, 0.0], &[0, 2], &cfg);
        assert!((v - 1.0).abs() < 1e-15);
    }

    #[test]
    fn combined_with_lambda_zero() {
        let v = combined_objective(
            &[1.0, 2.0, 3.0],
            &[0.1, 0.9, 0.5],
            &[0, 1, 1],
            &FrConfig::off(),
        );
        assert_eq!(v, 2.0);
    }
}
