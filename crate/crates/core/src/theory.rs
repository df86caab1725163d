//! Binary Gaussian analysis: closed-form per-population error probabilities
//! of threshold classifiers `f(x) = sign(x − θ)`, their noisy-label
//! counterparts, the midpoint estimator and its bias, and Monte Carlo
//! oracles for all of them.
//!
//! Class +1 is `N(μ₊, σ²)` and class −1 is `N(μ₋, σ²)` with `μ₊ > μ₋`. A
//! sample is in the tail of its class when it lies more than `η` standard
//! deviations from its mean toward the other class.

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::corpus::{GroupAssignment, LabeledCorpus};
use crate::error::{Error, Result};
use crate::rng::{self, tag};
use crate::synthesis::{group, NEGATIVE, POSITIVE};

/// `Φ(z) = ½·erfc(−z/√2)`.
pub fn std_normal_cdf(z: f64) -> f64 {
    0.5 * libm::erfc(-z / std::f64::consts::SQRT_2)
}

/// `ln Φ(z)`, accurate far into the lower tail where `Φ` underflows.
pub fn ln_std_normal_cdf(z: f64) -> f64 {
    if z > -37.0 {
        return std_normal_cdf(z).ln();
    }
    // Mills-ratio asymptotic series
    let z2 = z * z;
    let series =
        1.0 - 1.0 / z2 + 3.0 / (z2 * z2) - 15.0 / (z2 * z2 * z2) + 105.0 / (z2 * z2 * z2 * z2);
    -0.5 * z2 - (-z).ln() - 0.5 * (2.0 * std::f64::consts::PI).ln() + series.ln()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianWorld {
    pub mu_plus: f64,
    pub mu_minus: f64,
    pub sigma: f64,
    pub eta: f64,
    /// `P(Y = +1)`.
    pub prior_plus: f64,
    pub rho_h_plus: f64,
    pub rho_h_minus: f64,
    pub rho_t_plus: f64,
    pub rho_t_minus: f64,
}

impl GaussianWorld {
    /// `μ± = ±5`, `σ = 1`, `η = 1`, balanced prior, no noise.
    pub fn symmetric_five() -> Self {
        Self {
            mu_plus: 5.0,
            mu_minus: -5.0,
            sigma: 1.0,
            eta: 1.0,
            prior_plus: 0.5,
            rho_h_plus: 0.0,
            rho_h_minus: 0.0,
            rho_t_plus: 0.0,
            rho_t_minus: 0.0,
        }
    }

    pub fn with_noise(
        mut self,
        rho_h_plus: f64,
        rho_h_minus: f64,
        rho_t_plus: f64,
        rho_t_minus: f64,
    ) -> Self {
        self.rho_h_plus = rho_h_plus;
        self.rho_h_minus = rho_h_minus;
        self.rho_t_plus = rho_t_plus;
        self.rho_t_minus = rho_t_minus;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidParameter(m));
        if !(self.mu_plus > self.mu_minus)
            || !self.mu_plus.is_finite()
            || !self.mu_minus.is_finite()
        {
            return bad("mu_plus must exceed mu_minus".into());
        }
        if !(self.sigma > 0.0) || !self.sigma.is_finite() {
            return bad("sigma must be positive".into());
        }
        if !(self.eta >= 0.0) || !self.eta.is_finite() {
            return bad("eta must be nonnegative".into());
        }
        if !(self.prior_plus > 0.0 && self.prior_plus < 1.0) {
            return bad(format!(
                "prior_plus must lie in (0, 1), got {}",
                self.prior_plus
            ));
        }
        for r in [
            self.rho_h_plus,
            self.rho_h_minus,
            self.rho_t_plus,
            self.rho_t_minus,
        ] {
            if !(0.0..0.5).contains(&r) {
                return Err(Error::NoiseRateTooLarge(r));
            }
        }
        Ok(())
    }

    /// `Φ(−η)`, the tail fraction of each class.
    pub fn tail_mass(&self) -> Result<f64> {
        let m = std_normal_cdf(-self.eta);
        if m < 1e-300 {
            return Err(Error::VanishingTail(self.eta));
        }
        Ok(m)
    }

    /// Flip probability of a sample from `population` (head or tail) with
    /// clean label `class`.
    pub fn flip_rate(&self, head: bool, class: usize) -> f64 {
        match (head, class == POSITIVE) {
            (true, true) => self.rho_h_plus,
            (true, false) => self.rho_h_minus,
            (false, true) => self.rho_t_plus,
            (false, false) => self.rho_t_minus,
        }
    }
}

/// Per-population error probabilities, in the order H+, H−, T+, T−.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorQuadruple {
    pub err_h_plus: f64,
    pub err_h_minus: f64,
    pub err_t_plus: f64,
    pub err_t_minus: f64,
}

impl ErrorQuadruple {
    pub fn to_array(&self) -> [f64; 4] {
        [
            self.err_h_plus,
            self.err_h_minus,
            self.err_t_plus,
            self.err_t_minus,
        ]
    }

    fn from_array(a: [f64; 4]) -> Self {
        Self {
            err_h_plus: a[0],
            err_h_minus: a[1],
            err_t_plus: a[2],
            err_t_minus: a[3],
        }
    }
}

pub fn bayes_threshold(world: &GaussianWorld) -> f64 {
    (world.mu_minus + world.mu_plus) / 2.0
}

/// Head and tail error of one class given its standardized offset
/// `a = (θ − μ)/σ` toward the other class and whether θ is on the
/// head-exact side of the breakpoint.
fn class_errors(a: f64, head_exact: bool, eta: f64, tail_mass: f64) -> (f64, f64) {
    if head_exact {
        let tail = (ln_std_normal_cdf(a) - ln_std_normal_cdf(-eta)).exp();
        (0.0, tail.min(1.0))
    } else {
        let head = (std_normal_cdf(a) - tail_mass) / (1.0 - tail_mass);
        (head.clamp(0.0, 1.0), 1.0)
    }
}

/// Closed-form clean error probabilities of `sign(x − θ)`.
pub fn clean_error_probs(world: &GaussianWorld, theta: f64) -> Result<ErrorQuadruple> {
    world.validate()?;
    let tm = world.tail_mass()?;
    let s = world.sigma;
    let (hp, tp) = class_errors(
        (theta - world.mu_plus) / s,
        theta <= world.mu_plus - world.eta * s,
        world.eta,
        tm,
    );
    let (hm, tmi) = class_errors(
        (world.mu_minus - theta) / s,
        theta >= world.mu_minus + world.eta * s,
        world.eta,
        tm,
    );
    Ok(ErrorQuadruple {
        err_h_plus: hp,
        err_h_minus: hm,
        err_t_plus: tp,
        err_t_minus: tmi,
    })
}

/// Which branch of the piecewise error forms applies to a class.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapRegime {
    /// θ lies beyond the head boundary: head error is 0.
    HeadExact,
    /// θ lies inside the head: every tail sample is misclassified.
    TailSaturated,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ClassGap {
    /// `Err_T − Err_H`.
    pub gap: f64,
    /// Sign of `gap` in {−1, 0, +1}.
    pub sign: i8,
    /// `Φ((θ−μ)·s/σ) · sign((μ−θ)·s − ησ)` with `s = ±1`.
    pub expression: f64,
    pub regime: GapRegime,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapDirection {
    pub plus: ClassGap,
    pub minus: ClassGap,
}

fn signum(x: f64) -> i8 {
    if x > 0.0 {
        1
    } else if x < 0.0 {
        -1
    } else {
        0
    }
}

/// Tail-minus-head error gap of each class together with the signed
/// proportionality expression. Within one regime the gap is an increasing
/// affine function of the expression.
pub fn error_gap_direction(world: &GaussianWorld, theta: f64) -> Result<GapDirection> {
    let q = clean_error_probs(world, theta)?;
    let s = world.sigma;
    let es = world.eta * s;
    let plus_expr = std_normal_cdf((theta - world.mu_plus) / s)
        * f64::from(signum((world.mu_plus - theta) - es));
    let minus_expr = std_normal_cdf((world.mu_minus - theta) / s)
        * f64::from(signum((theta - world.mu_minus) - es));
    let gap_p = q.err_t_plus - q.err_h_plus;
    let gap_m = q.err_t_minus - q.err_h_minus;
    Ok(GapDirection {
        plus: ClassGap {
            gap: gap_p,
            sign: signum(gap_p),
            expression: plus_expr,
            regime: if theta <= world.mu_plus - es {
                GapRegime::HeadExact
            } else {
                GapRegime::TailSaturated
            },
        },
        minus: ClassGap {
            gap: gap_m,
            sign: signum(gap_m),
            expression: minus_expr,
            regime: if theta >= world.mu_minus + es {
                GapRegime::HeadExact
            } else {
                GapRegime::TailSaturated
            },
        },
    })
}

/// Noisy-label error probabilities as linear combinations of the clean
/// ones, with `p = P(Y = +1)`:
///
/// ```text
/// Ẽ_H+ = p(1−ρ_H⁺)E_H+ + (1−p)ρ_H⁻(1−E_H−)
/// Ẽ_H− = pρ_H⁺E_H+ + (1−p)(1−ρ_H⁻)(1−E_H−)
/// ```
///
/// and the same for the tail with `ρ_T±`.
pub fn noisy_error_probs(world: &GaussianWorld, theta: f64) -> Result<ErrorQuadruple> {
    let c = clean_error_probs(world, theta)?;
    Ok(noisy_from_clean(world, &c))
}

fn noisy_from_clean(w: &GaussianWorld, c: &ErrorQuadruple) -> ErrorQuadruple {
    let p = w.prior_plus;
    ErrorQuadruple {
        err_h_plus: p * (1.0 - w.rho_h_plus) * c.err_h_plus
            + (1.0 - p) * w.rho_h_minus * (1.0 - c.err_h_minus),
        err_h_minus: p * w.rho_h_plus * c.err_h_plus
            + (1.0 - p) * (1.0 - w.rho_h_minus) * (1.0 - c.err_h_minus),
        err_t_plus: p * (1.0 - w.rho_t_plus) * c.err_t_plus
            + (1.0 - p) * w.rho_t_minus * (1.0 - c.err_t_minus),
        err_t_minus: p * w.rho_t_plus * c.err_t_plus
            + (1.0 - p) * (1.0 - w.rho_t_minus) * (1.0 - c.err_t_minus),
    }
}

/// Raw Monte Carlo counts for one population (head or tail, both classes).
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationTally {
    pub draws: u64,
    /// Samples per label, indexed by [`NEGATIVE`] / [`POSITIVE`]. The label
    /// is the clean one in clean mode and the noisy one in noisy mode.
    pub label_count: [u64; 2],
    /// Samples per label with `x < θ`, i.e. predicted −1.
    pub below: [u64; 2],
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MonteCarloEstimate {
    pub estimates: ErrorQuadruple,
    pub std_errors: ErrorQuadruple,
    /// Sample count behind each estimate, same order as the quadruple.
    pub denominators: [u64; 4],
    pub head: PopulationTally,
    pub tail: PopulationTally,
}

/// Samples the head/tail generative model and tallies errors of
/// `sign(x − θ)`.
///
/// In clean mode each estimate is the error rate within its population and
/// clean class. In noisy mode the estimates follow the event structure of
/// [`noisy_error_probs`]: `Ẽ_G+` is the fraction of population `G` carrying
/// noisy label + and `x < θ`, and `Ẽ_G−` the fraction carrying noisy label −
/// and `x < θ`. Features, clean labels and flip draws come from separate
/// streams, so both modes see the same samples.
pub fn mc_error_probs(
    world: &GaussianWorld,
    theta: f64,
    n_samples: u64,
    seed: u64,
    noisy: bool,
) -> Result<MonteCarloEstimate> {
    world.validate()?;
    if n_samples == 0 {
        return Err(Error::InvalidParameter(
            "n_samples must be at least 1".into(),
        ));
    }
    let mut draw = rng::stream(seed, tag::MC_DRAW, 0);
    let mut flip = rng::stream(seed, tag::MC_FLIP, 0);
    let mut tallies = [PopulationTally::default(); 2];
    for _ in 0..n_samples {
        let y = if draw.random::<f64>() < world.prior_plus {
            POSITIVE
        } else {
            NEGATIVE
        };
        let z: f64 = StandardNormal.sample(&mut draw);
        let (mu, toward) = if y == POSITIVE {
            (world.mu_plus, z)
        } else {
            (world.mu_minus, -z)
        };
        let x = mu + world.sigma * z;
        let head = toward >= -world.eta;
        let u: f64 = flip.random();
        let label = if noisy && u < world.flip_rate(head, y) {
            1 - y
        } else {
            y
        };
        let t = &mut tallies[usize::from(!head)];
        t.draws += 1;
        t.label_count[label] += 1;
        if x < theta {
            t.below[label] += 1;
        }
    }
    let [head, tail] = tallies;
    let mut est = [0.0; 4];
    let mut den = [0u64; 4];
    for (slot, t, name) in [(0usize, &head, "head"), (2, &tail, "tail")] {
        if noisy {
            if t.draws == 0 {
                return Err(Error::EmptyPopulation(name));
            }
            den[slot] = t.draws;
            den[slot + 1] = t.draws;
            est[slot] = t.below[POSITIVE] as f64 / t.draws as f64;
            est[slot + 1] = t.below[NEGATIVE] as f64 / t.draws as f64;
        } else {
            if t.label_count[POSITIVE] == 0 || t.label_count[NEGATIVE] == 0 {
                return Err(Error::EmptyPopulation(name));
            }
            den[slot] = t.label_count[POSITIVE];
            den[slot + 1] = t.label_count[NEGATIVE];
            est[slot] = t.below[POSITIVE] as f64 / den[slot] as f64;
            est[slot + 1] =
                (t.label_count[NEGATIVE] - t.below[NEGATIVE]) as f64 / den[slot + 1] as f64;
        }
    }
    let se: Vec<f64> = est
        .iter()
        .zip(&den)
        .map(|(&p, &n)| binomial_se(p, n))
        .collect();
    Ok(MonteCarloEstimate {
        estimates: ErrorQuadruple::from_array(est),
        std_errors: ErrorQuadruple::from_array([se[0], se[1], se[2], se[3]]),
        denominators: den,
        head,
        tail,
    })
}

/// `√(p(1−p)/n)`.
pub fn binomial_se(p: f64, n: u64) -> f64 {
    (p * (1.0 - p) / n as f64).sqrt()
}

/// Sizes of the four noisy-labelled sets `S_H⁺, S_T⁺, S_H⁻, S_T⁻`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PopulationCounts {
    pub head_plus: usize,
    pub tail_plus: usize,
    pub head_minus: usize,
    pub tail_minus: usize,
}

impl PopulationCounts {
    pub fn validate(&self) -> Result<()> {
        if [
            self.head_plus,
            self.tail_plus,
            self.head_minus,
            self.tail_minus,
        ]
        .contains(&0)
        {
            return Err(Error::InvalidParameter(
                "population counts must all be at least 1".into(),
            ));
        }
        Ok(())
    }

    pub fn plus(&self) -> usize {
        self.head_plus + self.tail_plus
    }

    pub fn minus(&self) -> usize {
        self.head_minus + self.tail_minus
    }

    /// Class imbalance ratio `|S_I⁺| / |S_I⁻|`.
    pub fn imbalance_ratio(&self) -> f64 {
        self.plus() as f64 / self.minus() as f64
    }
}

/// Systematic offset of the midpoint estimator:
/// `(μ₋−μ₊)/2 · (ρ̄⁺ − ρ̄⁻)` with count-weighted class noise rates `ρ̄±`.
pub fn estimator_bias(world: &GaussianWorld, counts: &PopulationCounts) -> Result<f64> {
    world.validate()?;
    counts.validate()?;
    let wp = (world.rho_h_plus * counts.head_plus as f64
        + world.rho_t_plus * counts.tail_plus as f64)
        / counts.plus() as f64;
    let wm = (world.rho_h_minus * counts.head_minus as f64
        + world.rho_t_minus * counts.tail_minus as f64)
        / counts.minus() as f64;
    Ok((world.mu_minus - world.mu_plus) / 2.0 * (wp - wm))
}

/// `θ̃ = ½(mean of x with noisy label + + mean of x with noisy label −)`
/// over a one-dimensional binary corpus.
pub fn midpoint_estimator(corpus: &LabeledCorpus) -> Result<f64> {
    if corpus.dim() != 1 || corpus.class_count() != 2 {
        return Err(Error::InvalidParameter(
            "midpoint estimator needs a 1-D binary corpus".into(),
        ));
    }
    let mut sum = [0.0; 2];
    let mut n = [0usize; 2];
    for (&x, &y) in corpus.features().iter().zip(corpus.noisy_labels()) {
        sum[y] += x;
        n[y] += 1;
    }
    if n[POSITIVE] == 0 {
        return Err(Error::EmptyNoisyClass("+1"));
    }
    if n[NEGATIVE] == 0 {
        return Err(Error::EmptyNoisyClass("-1"));
    }
    Ok(0.5 * (sum[POSITIVE] / n[POSITIVE] as f64 + sum[NEGATIVE] / n[NEGATIVE] as f64))
}

/// Draws a noisy-labelled corpus with exactly the given set sizes.
///
/// Every member of a noisy-+ set starts as `z ~ N(μ₊, σ²)` restricted to the
/// head (or tail) region of class +1. With probability `ρ` (the set's noise
/// rate) its label is wrong and the sample actually comes from the other
/// class: `x = z − (μ₊ − μ₋)`. Noisy-− sets mirror this. Clean labels record
/// the true class; groups record the set (H+, T+, H−, T−).
pub fn sample_estimator_corpus(
    world: &GaussianWorld,
    counts: &PopulationCounts,
    seed: u64,
) -> Result<LabeledCorpus> {
    world.validate()?;
    counts.validate()?;
    let tm = world.tail_mass()?;
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    let shift = world.mu_plus - world.mu_minus;
    let mut rng = rng::stream(seed, tag::ESTIMATOR_DRAW, 0);
    let n = counts.plus() + counts.minus();
    let mut features = Vec::with_capacity(n);
    let mut clean = Vec::with_capacity(n);
    let mut noisy = Vec::with_capacity(n);
    let mut groups = Vec::with_capacity(n);
    let sets = [
        (
            group::HEAD_POSITIVE,
            counts.head_plus,
            POSITIVE,
            true,
            world.rho_h_plus,
        ),
        (
            group::TAIL_POSITIVE,
            counts.tail_plus,
            POSITIVE,
            false,
            world.rho_t_plus,
        ),
        (
            group::HEAD_NEGATIVE,
            counts.head_minus,
            NEGATIVE,
            true,
            world.rho_h_minus,
        ),
        (
            group::TAIL_NEGATIVE,
            counts.tail_minus,
            NEGATIVE,
            false,
            world.rho_t_minus,
        ),
    ];
    for (g, count, label, head, rho) in sets {
        for _ in 0..count {
            // standardized offset toward the other class, by inverse CDF
            let u: f64 = rng.random();
            let q = if head { tm + u * (1.0 - tm) } else { u * tm };
            let t = unit.inverse_cdf(q.clamp(f64::MIN_POSITIVE, 1.0 - f64::EPSILON));
            let z = if label == POSITIVE {
                world.mu_plus + world.sigma * t
            } else {
                world.mu_minus - world.sigma * t
            };
            let wrong = rng.random::<f64>() < rho;
            let x = match (wrong, label == POSITIVE) {
                (false, _) => z,
                (true, true) => z - shift,
                (true, false) => z + shift,
            };
            features.push(x);
            clean.push(if wrong { 1 - label } else { label });
            noisy.push(label);
            groups.push(g);
        }
    }
    LabeledCorpus::new(
        features,
        1,
        Some(clean),
        noisy,
        2,
        Some(GroupAssignment::new(groups, group::COUNT)?),
    )
}

/// Lower bound on `P(|θ̃ − θ* − Bias| ≤ δ)`: one minus five exponential
/// tail terms. Returned as-is, so it can be negative.
pub fn concentration_probability(
    world: &GaussianWorld,
    counts: &PopulationCounts,
    delta: f64,
) -> Result<f64> {
    world.validate()?;
    counts.validate()?;
    if !(delta > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "delta must be positive, got {delta}"
        )));
    }
    let dmu2 = (world.mu_plus - world.mu_minus).powi(2);
    let d2 = delta * delta;
    let ip = counts.plus() as f64;
    let im = counts.minus() as f64;
    let class_term = |i: f64, s: usize| 2.0 * (-8.0 * d2 * i * i / (25.0 * dmu2 * s as f64)).exp();
    let gauss = 2.0 * (-2.0 * d2 * ip * im / (25.0 * world.sigma.powi(2) * dmu2 * (ip + im))).exp();
    Ok(1.0
        - class_term(ip, counts.head_plus)
        - class_term(ip, counts.tail_plus)
        - class_term(im, counts.head_minus)
        - class_term(im, counts.tail_minus)
        - gauss)
}

/// `r = (1 − Φ(−η)) / Φ(−η)`, the head-to-tail size ratio within a class.
pub fn head_tail_ratio(world: &GaussianWorld) -> Result<f64> {
    let tm = world.tail_mass()?;
    Ok((1.0 - tm) / tm)
}

/// The two objectives compared by the risk-equivalence statement, for a
/// balanced prior:
///
/// ```text
/// G(θ) = r[(1−ρ_H)Ẽ_H+ + (1+ρ_H)Ẽ_H−] + [(1−ρ_T)Ẽ_T+ + (1+ρ_T)Ẽ_T−]
/// H(θ) = r(E_H+ + E_H−) + (E_T+ + E_T−) − 2rρ_H(Ẽ_H+ − Ẽ_H−) − ρ_T(Ẽ_T+ − Ẽ_T−)
/// ```
///
/// with `ρ_H = ρ_H⁺ − ρ_H⁻`, `ρ_T = ρ_T⁺ − ρ_T⁻`.
pub fn risk_objectives(world: &GaussianWorld, theta: f64) -> Result<(f64, f64)> {
    if world.prior_plus != 0.5 {
        return Err(Error::UnbalancedPrior(world.prior_plus));
    }
    let c = clean_error_probs(world, theta)?;
    let n = noisy_from_clean(world, &c);
    let r = head_tail_ratio(world)?;
    let rh = world.rho_h_plus - world.rho_h_minus;
    let rt = world.rho_t_plus - world.rho_t_minus;
    let g = r * ((1.0 - rh) * n.err_h_plus + (1.0 + rh) * n.err_h_minus)
        + ((1.0 - rt) * n.err_t_plus + (1.0 + rt) * n.err_t_minus);
    let h = r * (c.err_h_plus + c.err_h_minus) + (c.err_t_plus + c.err_t_minus)
        - 2.0 * r * rh * (n.err_h_plus - n.err_h_minus)
        - rt * (n.err_t_plus - n.err_t_minus);
    Ok((g, h))
}

/// Grid point minimizing `G(θ) + λ(|Ẽ_H+ − Ẽ_H−| + |Ẽ_T+ − Ẽ_T−|)`. Ties
/// go to the point closest to θ*, then to the smaller θ.
pub fn penalized_grid_argmin(world: &GaussianWorld, grid: &[f64], lambda: f64) -> Result<f64> {
    if grid.is_empty() {
        return Err(Error::InvalidParameter("theta grid is empty".into()));
    }
    if !(lambda >= 0.0) {
        return Err(Error::InvalidParameter(format!(
            "lambda must be >= 0, got {lambda}"
        )));
    }
    let star = bayes_threshold(world);
    let mut best: Option<(f64, f64)> = None;
    for &theta in grid {
        let (g, _) = risk_objectives(world, theta)?;
        let n = noisy_error_probs(world, theta)?;
        let v = g + lambda
            * ((n.err_h_plus - n.err_h_minus).abs() + (n.err_t_plus - n.err_t_minus).abs());
        let better = match best {
            None => true,
            Some((bt, bv)) => {
                v < bv || (v == bv && ((theta - star).abs(), theta) < ((bt - star).abs(), bt))
            }
        };
        if better {
            best = Some((theta, v));
        }
    }
    Ok(best.expect("nonempty grid").0)
}

/// `n` evenly spaced points from `lo` to `hi` inclusive.
pub fn linspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    match n {
        0 => Vec::new(),
        1 => vec![lo],
        _ => (0..n)
            .map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64)
            .collect(),
    }
}

/// One row of a theory grid table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TheoryRow {
    pub theta: f64,
    pub clean: ErrorQuadruple,
    pub noisy: ErrorQuadruple,
    pub g: f64,
    pub h: f64,
}

impl TheoryRow {
    pub fn difference(&self) -> f64 {
        self.g - self.h
    }
}

pub fn theory_grid(world: &GaussianWorld, grid: &[f64]) -> Result<Vec<TheoryRow>> {
    grid.iter()
        .map(|&theta| {
            let clean = clean_error_probs(world, theta)?;
            let (g, h) = risk_objectives(world, theta)?;
            Ok(TheoryRow {
                theta,
                clean,
                noisy: noisy_from_clean(world, &clean),
                g,
                h,
            })
        })
        .collect()
}

/// `max(G − H) − min(G − H)` over a grid.
pub fn objective_gap_spread(rows: &[TheoryRow]) -> f64 {
    let d: Vec<f64> = rows.iter().map(TheoryRow::difference).collect();
    let max = d.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = d.iter().copied().fold(f64::INFINITY, f64::min);
    max - min
}
