//! Experiment configuration: a JSON tree with one object per section.
//!
//! Every key can be overridden from the command line with
//! `--set section.key=value`; the value is parsed as JSON when it parses and
//! taken as a string otherwise.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use poplab::objectives::{FrConfig, FrLambda, LossKind};
use poplab::theory::{GaussianWorld, PopulationCounts};
use poplab::trainer::{LrSchedule, ModelSpec, TrainConfig};

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub synth: SynthSection,
    pub data: DataSection,
    pub groups: GroupsSection,
    pub model: ModelSection,
    pub train: TrainSection,
    pub loss: LossSection,
    pub fr: FrSection,
    pub influence: InfluenceSection,
    pub theory: TheorySection,
    pub ttest: TtestSection,
    pub output: OutputSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// Isotropic blobs per class, long-tail subsampled.
    Blobs,
    /// The binary head/tail Gaussian world with population noise.
    Gaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseModel {
    None,
    Sym,
    Imb,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum NoiseOrder {
    /// Flip labels on the balanced pool, then subsample.
    Pre,
    /// Subsample first, then flip labels.
    Post,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub kind: SynthKind,
    /// Head-class size before subsampling (blobs).
    pub n: usize,
    #[serde(rename = "K")]
    pub class_count: usize,
    pub r: f64,
    pub d: usize,
    pub sigma: f64,
    /// Standard deviation of the blob centers around the origin.
    pub center_scale: f64,
    pub noise: NoiseModel,
    pub rho: f64,
    pub noise_order: NoiseOrder,
    /// Clean evaluation samples per class; defaults to the head-class size.
    pub eval_per_class: Option<usize>,
    pub seed: u64,
    pub mu_plus: f64,
    pub mu_minus: f64,
    pub eta: f64,
    pub count_plus: usize,
    pub count_minus: usize,
    pub rho_h_plus: f64,
    pub rho_h_minus: f64,
    pub rho_t_plus: f64,
    pub rho_t_minus: f64,
}

impl Default for SynthSection {
    fn default() -> Self {
        Self {
            kind: SynthKind::Blobs,
            n: 500,
            class_count: 10,
            r: 10.0,
            d: 8,
            sigma: 1.0,
            center_scale: 3.0,
            noise: NoiseModel::Sym,
            rho: 0.2,
            noise_order: NoiseOrder::Post,
            eval_per_class: None,
            seed: 1,
            mu_plus: 2.0,
            mu_minus: -2.0,
            eta: 1.0,
            count_plus: 500,
            count_minus: 500,
            rho_h_plus: 0.0,
            rho_h_minus: 0.0,
            rho_t_plus: 0.0,
            rho_t_minus: 0.0,
        }
    }
}

/// Existing corpus files; when `train` is set, synthesis is skipped.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataSection {
    pub train: Option<PathBuf>,
    pub eval: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GroupMethod {
    /// Keep whatever assignment the corpus carries (possibly none).
    Keep,
    None,
    Kmeans,
    TwoGroup,
    File,
    /// One group per class: noisy labels in training, clean in evaluation.
    Class,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GroupsSection {
    pub method: GroupMethod,
    pub count: usize,
    pub max_iters: usize,
    pub tol: f64,
    pub seed: u64,
    pub head_fraction: f64,
    pub score_file: Option<PathBuf>,
    pub eval_score_file: Option<PathBuf>,
    pub group_file: Option<PathBuf>,
    pub eval_group_file: Option<PathBuf>,
}

impl Default for GroupsSection {
    fn default() -> Self {
        Self {
            method: GroupMethod::Keep,
            count: 5,
            max_iters: 100,
            tol: 1e-8,
            seed: 1,
            head_fraction: 0.5,
            score_file: None,
            eval_score_file: None,
            group_file: None,
            eval_group_file: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKindName {
    Linear,
    OneHidden,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ModelSection {
    pub kind: ModelKindName,
    pub hidden_dim: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            kind: ModelKindName::Linear,
            hidden_dim: 32,
        }
    }
}

impl ModelSection {
    pub fn spec(&self, input_dim: usize, class_count: usize) -> ModelSpec {
        match self.kind {
            ModelKindName::Linear => ModelSpec::linear(input_dim, class_count),
            ModelKindName::OneHidden => {
                ModelSpec::one_hidden(input_dim, self.hidden_dim, class_count)
            }
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainSection {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub decay_epochs: Vec<usize>,
    pub decay_factor: f64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            epochs: 20,
            batch_size: 64,
            lr: 0.1,
            decay_epochs: Vec::new(),
            decay_factor: 0.1,
            momentum: 0.9,
            weight_decay: 5e-4,
            seed: 1,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossSection {
    pub kind: String,
    pub alpha: Option<f64>,
    pub gamma: Option<f64>,
    pub tau: Option<f64>,
    pub peer_weight: Option<f64>,
}

impl Default for LossSection {
    fn default() -> Self {
        Self {
            kind: "ce".into(),
            alpha: None,
            gamma: None,
            tau: None,
            peer_weight: None,
        }
    }
}

impl LossSection {
    pub fn loss(&self) -> Result<LossKind> {
        let mut kind = LossKind::from_name(&self.kind)?;
        let stray = |name: &str| format!("loss.{name} does not apply to loss kind {:?}", self.kind);
        match &mut kind {
            LossKind::Ls { alpha } | LossKind::Nls { alpha } => {
                if let Some(a) = self.alpha {
                    *alpha = a;
                }
            }
            LossKind::Focal { gamma } => {
                if let Some(g) = self.gamma {
                    *gamma = g;
                }
            }
            LossKind::LogitAdj { tau } => {
                if let Some(t) = self.tau {
                    *tau = t;
                }
            }
            LossKind::Peer { weight } => {
                if let Some(w) = self.peer_weight {
                    *weight = w;
                }
            }
            LossKind::Ce => {}
        }
        let allowed = match kind {
            LossKind::Ce => "",
            LossKind::Ls { .. } | LossKind::Nls { .. } => "alpha",
            LossKind::Focal { .. } => "gamma",
            LossKind::LogitAdj { .. } => "tau",
            LossKind::Peer { .. } => "peer_weight",
        };
        for (name, set) in [
            ("alpha", self.alpha.is_some()),
            ("gamma", self.gamma.is_some()),
            ("tau", self.tau.is_some()),
            ("peer_weight", self.peer_weight.is_some()),
        ] {
            if set && name != allowed {
                bail!(stray(name));
            }
        }
        kind.validate()?;
        Ok(kind)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FrSection {
    pub lambda: FrLambda,
}

impl Default for FrSection {
    fn default() -> Self {
        Self {
            lambda: FrLambda::Shared(0.0),
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InfluenceSection {
    /// Training groups to remove; all of them when absent.
    pub groups: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TheorySection {
    pub mu_plus: f64,
    pub mu_minus: f64,
    pub sigma: f64,
    pub eta: f64,
    pub prior_plus: f64,
    pub rho_h_plus: f64,
    pub rho_h_minus: f64,
    pub rho_t_plus: f64,
    pub rho_t_minus: f64,
    /// Grid bounds default to `μ₋ − 3σ` and `μ₊ + 3σ`.
    pub grid_lo: Option<f64>,
    pub grid_hi: Option<f64>,
    pub grid_n: usize,
    pub lambdas: Vec<f64>,
    pub counts: Option<PopulationCounts>,
    /// Monte Carlo draws for the closed-form check at the Bayes threshold.
    pub mc_samples: u64,
    pub mc_seed: u64,
}

impl Default for TheorySection {
    fn default() -> Self {
        let w = GaussianWorld::symmetric_five();
        Self {
            mu_plus: w.mu_plus,
            mu_minus: w.mu_minus,
            sigma: w.sigma,
            eta: w.eta,
            prior_plus: w.prior_plus,
            rho_h_plus: 0.1,
            rho_h_minus: 0.05,
            rho_t_plus: 0.3,
            rho_t_minus: 0.2,
            grid_lo: None,
            grid_hi: None,
            grid_n: 101,
            lambdas: vec![0.0, 10.0],
            counts: None,
            mc_samples: 100_000,
            mc_seed: 1,
        }
    }
}

impl TheorySection {
    pub fn world(&self) -> GaussianWorld {
        GaussianWorld {
            mu_plus: self.mu_plus,
            mu_minus: self.mu_minus,
            sigma: self.sigma,
            eta: self.eta,
            prior_plus: self.prior_plus,
            rho_h_plus: self.rho_h_plus,
            rho_h_minus: self.rho_h_minus,
            rho_t_plus: self.rho_t_plus,
            rho_t_minus: self.rho_t_minus,
        }
    }

    pub fn grid_bounds(&self) -> (f64, f64) {
        (
            self.grid_lo.unwrap_or(self.mu_minus - 3.0 * self.sigma),
            self.grid_hi.unwrap_or(self.mu_plus + 3.0 * self.sigma),
        )
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TtestSection {
    /// Accuracy-pair CSV; the bundled fixture when absent.
    pub fixture: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OutputSection {
    pub dir: PathBuf,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
        }
    }
}

impl ExperimentConfig {
    pub fn train_config(&self) -> Result<TrainConfig> {
        let t = &self.train;
        let config = TrainConfig {
            epochs: t.epochs,
            batch_size: t.batch_size,
            lr: LrSchedule {
                initial: t.lr,
                decay_epochs: t.decay_epochs.clone(),
                decay_factor: t.decay_factor,
            },
            momentum: t.momentum,
            weight_decay: t.weight_decay,
            seed: t.seed,
            fr: FrConfig {
                lambda: self.fr.lambda.clone(),
            },
            loss: self.loss.loss()?,
        };
        config.validate()?;
        Ok(config)
    }

    /// Hex SHA-256 of the resolved configuration's JSON form.
    pub fn hash(&self) -> String {
        let text = serde_json::to_string(self).expect("config serializes");
        crate::output::hex_sha256(text.as_bytes())
    }

    /// Fails on the first referenced input file that does not exist.
    pub fn check_files(&self) -> Result<()> {
        let g = &self.groups;
        let files = [
            ("data.train", &self.data.train),
            ("data.eval", &self.data.eval),
            ("groups.score_file", &g.score_file),
            ("groups.eval_score_file", &g.eval_score_file),
            ("groups.group_file", &g.group_file),
            ("groups.eval_group_file", &g.eval_group_file),
            ("ttest.fixture", &self.ttest.fixture),
        ];
        for (key, path) in files {
            if let Some(p) = path {
                if !p.is_file() {
                    bail!("{key}: file {} does not exist", p.display());
                }
            }
        }
        Ok(())
    }
}

/// Command-line adjustments applied on top of the config file, in order.
#[derive(Debug, Default, Clone)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub noise_order: Option<NoiseOrder>,
    pub sets: Vec<String>,
}

pub fn load(path: Option<&Path>, overrides: &Overrides) -> Result<ExperimentConfig> {
    let mut tree = match path {
        Some(p) => {
            let text =
                fs::read_to_string(p).with_context(|| format!("reading config {}", p.display()))?;
            serde_json::from_str(&text)
                .with_context(|| format!("parsing config {}", p.display()))?
        }
        None => Value::Object(Default::default()),
    };
    if !tree.is_object() {
        bail!("config root must be a JSON object");
    }
    if let Some(seed) = overrides.seed {
        for key in ["synth.seed", "groups.seed", "train.seed"] {
            set_path(&mut tree, key, Value::from(seed))?;
        }
    }
    if let Some(dir) = &overrides.output_dir {
        set_path(
            &mut tree,
            "output.dir",
            Value::from(dir.to_string_lossy().into_owned()),
        )?;
    }
    if let Some(order) = overrides.noise_order {
        set_path(&mut tree, "synth.noise_order", serde_json::to_value(order)?)?;
    }
    for item in &overrides.sets {
        let (key, raw) = item
            .split_once('=')
            .with_context(|| format!("--set {item:?}: expected KEY=VALUE"))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_owned()));
        set_path(&mut tree, key.trim(), value)?;
    }
    serde_json::from_value(tree).context("invalid config")
}

fn set_path(tree: &mut Value, key: &str, value: Value) -> Result<()> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        bail!("invalid config key {key:?}");
    }
    let mut node = tree;
    for part in &parts[..parts.len() - 1] {
        let map = node
            .as_object_mut()
            .with_context(|| format!("config key {key:?} crosses a non-object value"))?;
        node = map
            .entry(part.to_string())
            .or_insert_with(|| Value::Object(Default::default()));
    }
    let map = node
        .as_object_mut()
        .with_context(|| format!("config key {key:?} crosses a non-object value"))?;
    map.insert(parts[parts.len() - 1].to_owned(), value);
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn set_overrides_nested_keys_and_parses_json() {
        let o = Overrides {
            sets: vec![
                "train.epochs=3".into(),
                "loss.kind=focal".into(),
                "fr.lambda=[0.5,1]".into(),
            ],
            ..Default::default()
        };
        let c = load(None, &o).unwrap();
        assert_eq!(c.train.epochs, 3);
        assert_eq!(c.loss.kind, "focal");
        assert_eq!(c.fr.lambda, FrLambda::PerGroup(vec![0.5, 1.0]));
    }

    #[test]
    fn seed_flag_reaches_every_section_and_set_wins() {
        let o = Overrides {
            seed: Some(9),
            sets: vec!["train.seed=4".into()],
            ..Default::default()
        };
        let c = load(None, &o).unwrap();
        assert_eq!((c.synth.seed, c.groups.seed, c.train.seed), (9, 9, 4));
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let o = Overrides {
            sets: vec!["train.epoch=3".into()],
            ..Default::default()
        };
        assert!(load(None, &o).is_err());
    }

    #[test]
    fn stray_hyperparameter_is_rejected() {
        let s = LossSection {
            kind: "ce".into(),
            gamma: Some(2.0),
            ..Default::default()
        };
        assert!(s.loss().is_err());
        let s = LossSection {
            kind: "focal".into(),
            gamma: Some(0.5),
            ..Default::default()
        };
        assert_eq!(s.loss().unwrap(), LossKind::Focal { gamma: 0.5 });
    }

    #[test]
    fn hash_changes_with_config() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.train.epochs += 1;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), a.clone().hash());
        assert_eq!(a.hash().len(), 64);
    }
}
