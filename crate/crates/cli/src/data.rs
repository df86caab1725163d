//! Training and evaluation corpora for a run: synthesized or loaded, then
//! grouped.

use anyhow::{bail, Context, Result};
use rand_distr::{Distribution, StandardNormal};

use poplab::io::read_corpus;
use poplab::population::{kmeans_groups, load_groups, load_scores, split_two_groups};
use poplab::rng::{self, child_seed, tag};
use poplab::synthesis::{
    gaussian_blobs, gaussian_mixture, imb_transition, longtail_counts, noisify, population_noise,
    subsample_longtail, sym_transition, GaussianMixtureSpec, LongTailSpec, NoiseTransition,
};
use poplab::{GroupAssignment, LabeledCorpus};

use crate::config::{
    ExperimentConfig, GroupMethod, GroupsSection, NoiseModel, NoiseOrder, SynthKind, SynthSection,
};

pub struct Dataset {
    pub train: LabeledCorpus,
    pub eval: LabeledCorpus,
}

/// Loads `data.train`/`data.eval` when given, otherwise synthesizes; then
/// applies the configured grouping.
pub fn prepare(config: &ExperimentConfig) -> Result<Dataset> {
    let raw = match (&config.data.train, &config.data.eval) {
        (Some(train), Some(eval)) => Dataset {
            train: read_corpus(train).with_context(|| format!("loading {}", train.display()))?,
            eval: read_corpus(eval).with_context(|| format!("loading {}", eval.display()))?,
        },
        (None, None) => synthesize(&config.synth).context("synthesis")?,
        _ => bail!("data.train and data.eval must be given together"),
    };
    if raw.train.dim() != raw.eval.dim() || raw.train.class_count() != raw.eval.class_count() {
        bail!(
            "train corpus (d={}, K={}) and eval corpus (d={}, K={}) disagree",
            raw.train.dim(),
            raw.train.class_count(),
            raw.eval.dim(),
            raw.eval.class_count()
        );
    }
    if raw.eval.clean_labels().is_none() {
        bail!("eval corpus has no clean labels");
    }
    assign_groups(raw, &config.groups).context("grouping")
}

pub fn synthesize(s: &SynthSection) -> Result<Dataset> {
    match s.kind {
        SynthKind::Blobs => blobs(s),
        SynthKind::Gaussian => gaussian(s),
    }
}

fn blobs(s: &SynthSection) -> Result<Dataset> {
    if s.d == 0 {
        bail!("synth.d must be positive");
    }
    if s.class_count < 2 {
        bail!("synth.K must be at least 2");
    }
    if !(s.center_scale >= 0.0) {
        bail!("synth.center_scale must be nonnegative");
    }
    // stream index 0 of FEATURE_DRAW belongs to the point draws
    let mut rng = rng::stream(s.seed, tag::FEATURE_DRAW, 1);
    let centers: Vec<Vec<f64>> = (0..s.class_count)
        .map(|_| {
            (0..s.d)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    s.center_scale * z
                })
                .collect::<Vec<f64>>()
        })
        .collect();
    let spec = LongTailSpec {
        base_count: s.n,
        imbalance_ratio: s.r,
        class_count: s.class_count,
    };
    let counts = longtail_counts(&spec)?;
    let t = transition(s, &counts)?;

    let pool = gaussian_blobs(&centers, s.sigma, &vec![s.n; s.class_count], s.seed)?;
    let train = match s.noise_order {
        NoiseOrder::Post => noisify(&subsample_longtail(&pool, &spec, s.seed)?, &t, s.seed)?,
        NoiseOrder::Pre => subsample_longtail(&noisify(&pool, &t, s.seed)?, &spec, s.seed)?,
    };
    let per_class = s.eval_per_class.unwrap_or(s.n);
    let eval = gaussian_blobs(
        &centers,
        s.sigma,
        &vec![per_class; s.class_count],
        child_seed(s.seed, tag::FEATURE_DRAW, 2),
    )?;
    Ok(Dataset { train, eval })
}

fn transition(s: &SynthSection, counts: &[usize]) -> Result<NoiseTransition> {
    Ok(match s.noise {
        NoiseModel::None => NoiseTransition::identity(s.class_count),
        NoiseModel::Sym => sym_transition(s.class_count, s.rho)?,
        NoiseModel::Imb => {
            // priors of the long-tailed set, whichever order noise is applied in
            let total: usize = counts.iter().sum();
            let priors: Vec<f64> = counts.iter().map(|&c| c as f64 / total as f64).collect();
            imb_transition(s.class_count, s.rho, &priors)?
        }
    })
}

fn gaussian(s: &SynthSection) -> Result<Dataset> {
    let spec = GaussianMixtureSpec {
        mu_plus: s.mu_plus,
        mu_minus: s.mu_minus,
        sigma: s.sigma,
        eta: s.eta,
        count_plus: s.count_plus,
        count_minus: s.count_minus,
    };
    let clean = gaussian_mixture(&spec, s.seed)?;
    let t_head = NoiseTransition::binary(s.rho_h_minus, s.rho_h_plus)?;
    let t_tail = NoiseTransition::binary(s.rho_t_minus, s.rho_t_plus)?;
    let train = population_noise(&clean, &t_head, &t_tail, s.seed)?;
    let per_class = s.eval_per_class.unwrap_or(s.count_plus.max(s.count_minus));
    let eval_spec = GaussianMixtureSpec {
        count_plus: per_class,
        count_minus: per_class,
        ..spec
    };
    let eval = gaussian_mixture(&eval_spec, child_seed(s.seed, tag::GAUSSIAN_DRAW, 1))?;
    Ok(Dataset { train, eval })
}

fn assign_groups(data: Dataset, g: &GroupsSection) -> Result<Dataset> {
    let Dataset { train, eval } = data;
    let (train_groups, eval_groups) = match g.method {
        GroupMethod::Keep => return Ok(Dataset { train, eval }),
        GroupMethod::None => (None, None),
        GroupMethod::Kmeans => {
            let km = kmeans_groups(
                train.features(),
                train.dim(),
                g.count,
                g.seed,
                g.max_iters,
                g.tol,
            )?;
            let eval_ids = (0..eval.len())
                .map(|i| nearest(eval.row(i), (0..g.count).map(|c| km.centroid(c))))
                .collect();
            let eval_groups = GroupAssignment::new(eval_ids, g.count)?;
            (Some(km.assignment), Some(eval_groups))
        }
        GroupMethod::TwoGroup => {
            let path = g
                .score_file
                .as_ref()
                .context("groups.two_group needs groups.score_file")?;
            let scores = load_scores(path)?;
            if scores.len() != train.len() {
                bail!(
                    "{} has {} scores for {} training rows",
                    path.display(),
                    scores.len(),
                    train.len()
                );
            }
            let eval_groups = match &g.eval_score_file {
                Some(p) => {
                    let s = load_scores(p)?;
                    if s.len() != eval.len() {
                        bail!(
                            "{} has {} scores for {} eval rows",
                            p.display(),
                            s.len(),
                            eval.len()
                        );
                    }
                    Some(split_two_groups(&s, g.head_fraction)?)
                }
                None => None,
            };
            (
                Some(split_two_groups(&scores, g.head_fraction)?),
                eval_groups,
            )
        }
        GroupMethod::File => {
            let path = g
                .group_file
                .as_ref()
                .context("groups.file needs groups.group_file")?;
            let train_groups = load_groups(path, train.len())?;
            let eval_groups = g
                .eval_group_file
                .as_ref()
                .map(|p| load_groups(p, eval.len()))
                .transpose()?;
            (Some(train_groups), eval_groups)
        }
        GroupMethod::Class => {
            let k = train.class_count();
            let train_groups = GroupAssignment::new(train.noisy_labels().to_vec(), k)?;
            let eval_groups = GroupAssignment::new(eval.require_clean()?.to_vec(), k)?;
            (Some(train_groups), Some(eval_groups))
        }
    };
    Ok(Dataset {
        train: train.with_groups(train_groups),
        eval: eval.with_groups(eval_groups),
    })
}

/// Index of the closest centroid; ties go to the lower index.
fn nearest<'a>(x: &[f64], centroids: impl Iterator<Item = &'a [f64]>) -> usize {
    let mut best = (0, f64::INFINITY);
    for (c, mu) in centroids.enumerate() {
        let d: f64 = x.iter().zip(mu).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best.1 {
            best = (c, d);
        }
    }
    best.0
}
