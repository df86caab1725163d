//! One function per subcommand. Each writes its artifacts plus
//! `config.json` and `manifest.json` under `output.dir`.

use std::fmt::Write as _;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;

use poplab::influence::{ablation_report, BoxSummary, InfluenceReport};
use poplab::io::{meta_path, write_corpus};
use poplab::stats::{
    run_ttest_table, ttest_table_csv, ttest_table_from_str, ACCURACY_PAIRS_FIXTURE,
};
use poplab::theory::{
    bayes_threshold, clean_error_probs, estimator_bias, head_tail_ratio, linspace, mc_error_probs,
    noisy_error_probs, objective_gap_spread, penalized_grid_argmin, theory_grid, ErrorQuadruple,
    GaussianWorld,
};
use poplab::trainer::{train, Evaluation, TrainReport};
use poplab::{CorpusSummary, LabeledCorpus};

use crate::config::ExperimentConfig;
use crate::data::{self, Dataset};
use crate::output::{cell, OutputDir};

/// Spread of `G − H` below which the grid counts as constant.
pub const CONSTANCY_TOLERANCE: f64 = 1e-9;

/// Largest tolerated gap between the recomposed and the overall accuracy
/// difference of an influence report.
const RECOMPOSITION_TOLERANCE: f64 = 1e-9;

#[derive(Serialize)]
struct SynthStats {
    train: CorpusSummary,
    eval: CorpusSummary,
}

pub fn synth(config: &ExperimentConfig) -> Result<()> {
    let Dataset { train, eval } = data::prepare(config)?;
    let mut out = OutputDir::create(&config.output.dir)?;
    write_pair(&mut out, "train.csv", &train)?;
    write_pair(&mut out, "eval.csv", &eval)?;
    out.write_json(
        "stats.json",
        &SynthStats {
            train: train.summary(),
            eval: eval.summary(),
        },
    )?;
    out.finish("synth", config, &[])
}

fn write_pair(out: &mut OutputDir, name: &str, corpus: &LabeledCorpus) -> Result<()> {
    let path = out.path(name);
    write_corpus(corpus, &path).with_context(|| format!("writing {}", path.display()))?;
    out.record(name);
    let meta = meta_path(&path);
    out.record(&meta.file_name().expect("file name").to_string_lossy());
    Ok(())
}

fn run_training(config: &ExperimentConfig) -> Result<(Dataset, TrainReport)> {
    let train_config = config.train_config()?;
    let data = data::prepare(config)?;
    let spec = config
        .model
        .spec(data.train.dim(), data.train.class_count());
    let report = train(&data.train, &data.eval, spec, &train_config).context("training")?;
    Ok((data, report))
}

pub fn train_cmd(config: &ExperimentConfig) -> Result<()> {
    let (_, report) = run_training(config)?;
    let mut out = OutputDir::create(&config.output.dir)?;
    out.write("report.jsonl", report.to_jsonl())?;
    out.write("model.txt", report.model.to_text())?;
    out.finish("train", config, &[])
}

#[derive(Serialize)]
struct SweepEntry<'a> {
    removed_group: usize,
    removed_rows: usize,
    full_accuracy: f64,
    ablated_accuracy: f64,
    overall_difference: f64,
    recomposed_difference: Option<f64>,
    acc_p_quartiles: &'a Option<BoxSummary>,
    acc_c_quartiles: Option<BoxSummary>,
    infl_quartiles: Option<BoxSummary>,
}

#[derive(Serialize)]
struct SweepSummary<'a> {
    full_accuracy: f64,
    eval_group_counts: Vec<usize>,
    reports: Vec<SweepEntry<'a>>,
}

/// `Σ_g n_g · acc_p[g] / n`; `None` without an evaluation assignment.
fn recompose(report: &InfluenceReport, eval_counts: &[usize], n: usize) -> Option<f64> {
    if report.acc_p.is_empty() || n == 0 {
        return None;
    }
    let s: f64 = report
        .acc_p
        .iter()
        .zip(eval_counts)
        .map(|(d, &c)| d.unwrap_or(0.0) * c as f64)
        .sum();
    Some(s / n as f64)
}

pub fn influence(config: &ExperimentConfig) -> Result<()> {
    let train_config = config.train_config()?;
    let Dataset {
        train: train_set,
        eval,
    } = data::prepare(config)?;
    let groups = train_set
        .groups()
        .context("influence needs a training group assignment (set groups.method)")?;
    let targets: Vec<usize> = match &config.influence.groups {
        Some(list) => list.clone(),
        None => (0..groups.group_count()).collect(),
    };
    let train_counts = groups.counts();
    if let Some(&bad) = targets.iter().find(|&&g| g >= groups.group_count()) {
        bail!(
            "influence.groups: group {bad} is outside 0..{}",
            groups.group_count()
        );
    }
    let spec = config.model.spec(train_set.dim(), train_set.class_count());
    let full = train(&train_set, &eval, spec, &train_config)
        .context("training the full model")?
        .final_eval;
    let reports: Vec<InfluenceReport> = targets
        .par_iter()
        .map(|&g| {
            ablation_report(&full, &train_set, &eval, g, spec, &train_config)
                .with_context(|| format!("ablating group {g}"))
        })
        .collect::<Result<_>>()?;

    let eval_counts = eval.groups().map(|a| a.counts()).unwrap_or_default();
    let clean = eval.require_clean()?;
    let class_counts = class_counts(clean, eval.class_count());
    let mut acc_p = String::from("removed_group,eval_group,eval_count,acc_diff\n");
    let mut acc_c = String::from("removed_group,class,eval_count,acc_diff\n");
    let mut infl = String::from("removed_group,sample,clean_label,eval_group,infl\n");
    let mut entries = Vec::with_capacity(reports.len());
    for r in &reports {
        let i = r.removed_group;
        for (g, (d, c)) in r.acc_p.iter().zip(&eval_counts).enumerate() {
            writeln!(acc_p, "{i},{g},{c},{}", cell(*d))?;
        }
        for (k, (d, c)) in r.acc_c.iter().zip(&class_counts).enumerate() {
            writeln!(acc_c, "{i},{k},{c},{}", cell(*d))?;
        }
        for (s, v) in r.infl.iter().enumerate() {
            let g = eval
                .groups()
                .map(|a| a.ids()[s].to_string())
                .unwrap_or_default();
            writeln!(infl, "{i},{s},{},{g},{v:?}", clean[s])?;
        }
        let recomposed = recompose(r, &eval_counts, eval.len());
        if let Some(v) = recomposed {
            let gap = (v - r.overall_difference()).abs();
            if gap > RECOMPOSITION_TOLERANCE {
                bail!(
                    "group {i}: per-group differences recompose to {v}, overall difference is {}",
                    r.overall_difference()
                );
            }
        }
        let present = |v: &[Option<f64>]| v.iter().flatten().copied().collect::<Vec<f64>>();
        entries.push(SweepEntry {
            removed_group: i,
            removed_rows: train_counts[i],
            full_accuracy: r.full_accuracy,
            ablated_accuracy: r.ablated_accuracy,
            overall_difference: r.overall_difference(),
            recomposed_difference: recomposed,
            acc_p_quartiles: &r.acc_p_summary,
            acc_c_quartiles: BoxSummary::of(&present(&r.acc_c)),
            infl_quartiles: BoxSummary::of(&r.infl),
        });
    }
    let mut out = OutputDir::create(&config.output.dir)?;
    out.write("acc_p.csv", acc_p)?;
    out.write("acc_c.csv", acc_c)?;
    out.write("infl.csv", infl)?;
    out.write_json(
        "influence.json",
        &SweepSummary {
            full_accuracy: full.accuracy,
            eval_group_counts: eval_counts.clone(),
            reports: entries,
        },
    )?;
    out.finish("influence", config, &[])
}

fn class_counts(labels: &[usize], k: usize) -> Vec<usize> {
    let mut c = vec![0; k];
    for &y in labels {
        c[y] += 1;
    }
    c
}

#[derive(Serialize)]
struct Spread {
    min: f64,
    max: f64,
    spread: f64,
    tolerance: f64,
    constant: bool,
}

#[derive(Serialize)]
struct Argmin {
    lambda: f64,
    theta: f64,
    distance_to_bayes: f64,
}

#[derive(Serialize)]
struct McCell {
    population: &'static str,
    closed_form: f64,
    estimate: f64,
    std_error: f64,
    z: f64,
}

#[derive(Serialize)]
struct McCheck {
    theta: f64,
    samples: u64,
    seed: u64,
    clean: Vec<McCell>,
    noisy: Vec<McCell>,
    max_abs_z: f64,
    within_3se: bool,
}

#[derive(Serialize)]
struct Estimator {
    bias: f64,
    expected_estimate: f64,
}

#[derive(Serialize)]
struct TheorySummary {
    world: GaussianWorld,
    grid_lo: f64,
    grid_hi: f64,
    grid_n: usize,
    bayes_threshold: f64,
    head_tail_ratio: f64,
    g_minus_h: Spread,
    argmins: Vec<Argmin>,
    monte_carlo: Option<McCheck>,
    estimator: Option<Estimator>,
}

const POPULATIONS: [&str; 4] = ["h_plus", "h_minus", "t_plus", "t_minus"];

fn mc_cells(
    closed: &ErrorQuadruple,
    estimate: &ErrorQuadruple,
    denominators: &[u64; 4],
) -> Vec<McCell> {
    closed
        .to_array()
        .iter()
        .zip(estimate.to_array())
        .zip(denominators)
        .zip(POPULATIONS)
        .map(|(((&p, e), &n), population)| {
            let std_error = if n == 0 {
                0.0
            } else {
                (p * (1.0 - p) / n as f64).sqrt()
            };
            let z = if std_error > 0.0 {
                (e - p) / std_error
            } else if e == p {
                0.0
            } else {
                f64::INFINITY
            };
            McCell {
                population,
                closed_form: p,
                estimate: e,
                std_error,
                z,
            }
        })
        .collect()
}

fn monte_carlo(world: &GaussianWorld, theta: f64, n: u64, seed: u64) -> Result<McCheck> {
    let clean_mc = mc_error_probs(world, theta, n, seed, false)?;
    let noisy_mc = mc_error_probs(world, theta, n, seed, true)?;
    let clean = mc_cells(
        &clean_error_probs(world, theta)?,
        &clean_mc.estimates,
        &clean_mc.denominators,
    );
    let noisy = mc_cells(
        &noisy_error_probs(world, theta)?,
        &noisy_mc.estimates,
        &noisy_mc.denominators,
    );
    let max_abs_z = clean
        .iter()
        .chain(&noisy)
        .map(|c| c.z.abs())
        .fold(0.0, f64::max);
    Ok(McCheck {
        theta,
        samples: n,
        seed,
        clean,
        noisy,
        max_abs_z,
        within_3se: max_abs_z <= 3.0,
    })
}

pub fn theory(config: &ExperimentConfig) -> Result<()> {
    let t = &config.theory;
    let world = t.world();
    world.validate()?;
    if t.grid_n < 2 {
        bail!("theory.grid_n must be at least 2");
    }
    let (lo, hi) = t.grid_bounds();
    if !(lo < hi) {
        bail!("theory grid is empty: [{lo}, {hi}]");
    }
    let grid = linspace(lo, hi, t.grid_n);
    let rows = theory_grid(&world, &grid)?;

    let mut csv = String::from("theta");
    for prefix in ["clean", "noisy"] {
        for p in POPULATIONS {
            write!(csv, ",{prefix}_{p}")?;
        }
    }
    csv.push_str(",g,h,g_minus_h\n");
    for r in &rows {
        write!(csv, "{:?}", r.theta)?;
        for v in r.clean.to_array().into_iter().chain(r.noisy.to_array()) {
            write!(csv, ",{v:?}")?;
        }
        writeln!(csv, ",{:?},{:?},{:?}", r.g, r.h, r.difference())?;
    }

    let star = bayes_threshold(&world);
    let diffs: Vec<f64> = rows.iter().map(|r| r.difference()).collect();
    let spread = objective_gap_spread(&rows);
    let argmins = t
        .lambdas
        .iter()
        .map(|&lambda| {
            let theta = penalized_grid_argmin(&world, &grid, lambda)?;
            Ok(Argmin {
                lambda,
                theta,
                distance_to_bayes: (theta - star).abs(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let monte_carlo = match t.mc_samples {
        0 => None,
        n => Some(monte_carlo(&world, star, n, t.mc_seed)?),
    };
    let estimator = t
        .counts
        .map(|counts| -> Result<Estimator> {
            let bias = estimator_bias(&world, &counts)?;
            Ok(Estimator {
                bias,
                expected_estimate: star + bias,
            })
        })
        .transpose()?;
    let summary = TheorySummary {
        world,
        grid_lo: lo,
        grid_hi: hi,
        grid_n: t.grid_n,
        bayes_threshold: star,
        head_tail_ratio: head_tail_ratio(&world)?,
        g_minus_h: Spread {
            min: diffs.iter().copied().fold(f64::INFINITY, f64::min),
            max: diffs.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            spread,
            tolerance: CONSTANCY_TOLERANCE,
            constant: spread <= CONSTANCY_TOLERANCE,
        },
        argmins,
        monte_carlo,
        estimator,
    };
    let mut out = OutputDir::create(&config.output.dir)?;
    out.write("theory.csv", csv)?;
    out.write_json("summary.json", &summary)?;
    out.finish("theory", config, &[])
}

pub fn ttest(config: &ExperimentConfig) -> Result<()> {
    let rows = match &config.ttest.fixture {
        Some(path) => {
            run_ttest_table(path).with_context(|| format!("fixture {}", path.display()))?
        }
        None => ttest_table_from_str(ACCURACY_PAIRS_FIXTURE).context("bundled fixture")?,
    };
    let mut out = OutputDir::create(&config.output.dir)?;
    out.write("ttest.csv", ttest_table_csv(&rows))?;
    out.finish("ttest", config, &[])
}

fn pair_rows(
    header: &str,
    counts: &[usize],
    a: &[Option<f64>],
    b: &[Option<f64>],
) -> Result<String> {
    let mut csv = format!("{header},count,acc_baseline,acc_treated,diff\n");
    for (i, ((c, x), y)) in counts.iter().zip(a).zip(b).enumerate() {
        let d = x.zip(*y).map(|(x, y)| y - x);
        writeln!(csv, "{i},{c},{},{},{}", cell(*x), cell(*y), cell(d))?;
    }
    Ok(csv)
}

/// Trains both configs and tabulates per-class and per-group accuracy pairs.
pub fn compare(baseline: &ExperimentConfig, treated: &ExperimentConfig) -> Result<()> {
    let (a, b) = rayon::join(
        || run_training(baseline).context("baseline run"),
        || run_training(treated).context("treated run"),
    );
    let ((data_a, report_a), (data_b, report_b)) = (a?, b?);
    if data_a.eval.features() != data_b.eval.features()
        || data_a.eval.clean_labels() != data_b.eval.clean_labels()
    {
        bail!("baseline and treated configs evaluate on different corpora");
    }
    let eval = &data_a.eval;
    let (ea, eb): (&Evaluation, &Evaluation) = (&report_a.final_eval, &report_b.final_eval);
    let mut out = OutputDir::create(&baseline.output.dir)?;
    let classes = class_counts(eval.require_clean()?, eval.class_count());
    out.write(
        "compare_classes.csv",
        pair_rows("class", &classes, &ea.per_class, &eb.per_class)?,
    )?;
    match (&ea.per_group, &eb.per_group, data_b.eval.groups()) {
        (Some(ga), Some(gb), Some(assign_b)) if eval.groups() == Some(assign_b) => {
            let counts = assign_b.counts();
            out.write("compare_groups.csv", pair_rows("group", &counts, ga, gb)?)?;
        }
        _ => {}
    }
    out.finish("compare", baseline, &[treated])
}
