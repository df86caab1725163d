//! Small softmax classifiers trained by mini-batch SGD on the combined
//! objective (mean base loss + fairness penalty), and their evaluation.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::LabeledCorpus;
use crate::error::{Error, Result};
use crate::objectives::{
    fr_penalty_grad, peer_loss_grad, softmax_probs, FrConfig, FrLambda, LossKind,
};
use crate::rng::{self, tag};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModelKind {
    Linear,
    OneHidden { hidden_dim: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub kind: ModelKind,
    pub input_dim: usize,
    pub class_count: usize,
}

impl ModelSpec {
    pub fn linear(input_dim: usize, class_count: usize) -> Self {
        Self {
            kind: ModelKind::Linear,
            input_dim,
            class_count,
        }
    }

    pub fn one_hidden(input_dim: usize, hidden_dim: usize, class_count: usize) -> Self {
        Self {
            kind: ModelKind::OneHidden { hidden_dim },
            input_dim,
            class_count,
        }
    }

    fn validate(&self) -> Result<()> {
        let hidden_ok = match self.kind {
            ModelKind::Linear => true,
            ModelKind::OneHidden { hidden_dim } => hidden_dim >= 1,
        };
        if self.input_dim < 1 || self.class_count < 1 || !hidden_ok {
            return Err(Error::InvalidParameter(
                "model dimensions must be at least 1".into(),
            ));
        }
        Ok(())
    }

    /// `(name, rows, cols)` of every parameter block, in storage order.
    /// Vectors have `cols == 0`.
    fn blocks(&self) -> Vec<(&'static str, usize, usize)> {
        let (d, k) = (self.input_dim, self.class_count);
        match self.kind {
            ModelKind::Linear => vec![("W", k, d), ("b", k, 0)],
            ModelKind::OneHidden { hidden_dim: h } => {
                vec![("W1", h, d), ("b1", h, 0), ("W2", k, h), ("b2", k, 0)]
            }
        }
    }

    pub fn param_count(&self) -> usize {
        self.blocks().iter().map(|&(_, r, c)| r * c.max(1)).sum()
    }
}

/// Model parameters in a flat vector; see [`ModelSpec`] for the layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Model {
    pub spec: ModelSpec,
    pub params: Vec<f64>,
}

impl Model {
    /// Weights uniform in `±1/√fan_in`, biases zero.
    pub fn init(spec: ModelSpec, seed: u64) -> Result<Self> {
        spec.validate()?;
        let mut rng = rng::stream(seed, tag::MODEL_INIT, 0);
        let mut params = Vec::with_capacity(spec.param_count());
        for (_, rows, cols) in spec.blocks() {
            if cols == 0 {
                params.extend(std::iter::repeat(0.0).take(rows));
            } else {
                let a = 1.0 / (cols as f64).sqrt();
                params.extend((0..rows * cols).map(|_| rng.random_range(-a..a)));
            }
        }
        Ok(Self { spec, params })
    }

    pub fn from_params(spec: ModelSpec, params: Vec<f64>) -> Result<Self> {
        spec.validate()?;
        if params.len() != spec.param_count() {
            return Err(Error::LengthMismatch {
                expected: spec.param_count(),
                found: params.len(),
            });
        }
        Ok(Self { spec, params })
    }

    pub fn logits(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).0
    }

    /// Logits and, for the hidden-layer model, the hidden activations.
    fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.spec.input_dim;
        let k = self.spec.class_count;
        let p = &self.params;
        match self.spec.kind {
            ModelKind::Linear => {
                let (w, b) = p.split_at(k * d);
                let z = (0..k)
                    .map(|c| b[c] + dot(&w[c * d..(c + 1) * d], x))
                    .collect();
                (z, Vec::new())
            }
            ModelKind::OneHidden { hidden_dim: h } => {
                let (w1, rest) = p.split_at(h * d);
                let (b1, rest) = rest.split_at(h);
                let (w2, b2) = rest.split_at(k * h);
                let hid: Vec<f64> = (0..h)
                    .map(|j| (b1[j] + dot(&w1[j * d..(j + 1) * d], x)).tanh())
                    .collect();
                let z = (0..k)
                    .map(|c| b2[c] + dot(&w2[c * h..(c + 1) * h], &hid))
                    .collect();
                (z, hid)
            }
        }
    }

    /// Adds `∂(dz·z)/∂params` at input `x` into `grad`.
    fn backward(&self, x: &[f64], hid: &[f64], dz: &[f64], grad: &mut [f64]) {
        let d = self.spec.input_dim;
        let k = self.spec.class_count;
        match self.spec.kind {
            ModelKind::Linear => {
                let (gw, gb) = grad.split_at_mut(k * d);
                for c in 0..k {
                    for j in 0..d {
                        gw[c * d + j] += dz[c] * x[j];
                    }
                    gb[c] += dz[c];
                }
            }
            ModelKind::OneHidden { hidden_dim: h } => {
                let w2 = &self.params[h * d + h..h * d + h + k * h];
                let (gw1, rest) = grad.split_at_mut(h * d);
                let (gb1, rest) = rest.split_at_mut(h);
                let (gw2, gb2) = rest.split_at_mut(k * h);
                for c in 0..k {
                    for j in 0..h {
                        gw2[c * h + j] += dz[c] * hid[j];
                    }
                    gb2[c] += dz[c];
                }
                for j in 0..h {
                    let dh: f64 = (0..k).map(|c| w2[c * h + j] * dz[c]).sum();
                    let da = dh * (1.0 - hid[j] * hid[j]);
                    for i in 0..d {
                        gw1[j * d + i] += da * x[i];
                    }
                    gb1[j] += da;
                }
            }
        }
    }

    /// Argmax prediction, lowest index on ties.
    pub fn predict(&self, x: &[f64]) -> usize {
        argmax(&self.logits(x))
    }

    /// Decision threshold of a 1-D binary linear model: class 1 wins for
    /// `x` above it when `w₁ > w₀`. `None` for other models or equal weights.
    pub fn threshold(&self) -> Option<f64> {
        if self.spec.kind != ModelKind::Linear
            || self.spec.input_dim != 1
            || self.spec.class_count != 2
        {
            return None;
        }
        let p = &self.params;
        let dw = p[1] - p[0];
        if dw == 0.0 {
            return None;
        }
        Some(-(p[3] - p[2]) / dw)
    }

    /// Text form: a `model` line, one `shape` line per block, then one real
    /// per line.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let kind = match self.spec.kind {
            ModelKind::Linear => "linear",
            ModelKind::OneHidden { .. } => "one_hidden",
        };
        writeln!(s, "model {kind}").unwrap();
        for (name, r, c) in self.spec.blocks() {
            if c == 0 {
                writeln!(s, "shape {name} {r}").unwrap();
            } else {
                writeln!(s, "shape {name} {r} {c}").unwrap();
            }
        }
        for v in &self.params {
            writeln!(s, "{v}").unwrap();
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |m: &str| Error::ModelMalformed(m.to_owned());
        let mut lines = text.lines();
        let kind = lines
            .next()
            .and_then(|l| l.strip_prefix("model "))
            .ok_or_else(|| bad("missing model line"))?;
        let mut shapes = Vec::new();
        let mut values = Vec::new();
        for line in lines {
            if let Some(rest) = line.strip_prefix("shape ") {
                let parts: Vec<&str> = rest.split_whitespace().collect();
                let dims: Vec<usize> = parts[1..]
                    .iter()
                    .map(|p| p.parse().map_err(|_| bad(line)))
                    .collect::<Result<_>>()?;
                shapes.push((parts.first().copied().unwrap_or("").to_owned(), dims));
            } else {
                values.push(line.trim().parse::<f64>().map_err(|_| bad(line))?);
            }
        }
        let dim = |i: usize, j: usize| {
            shapes
                .get(i)
                .and_then(|s| s.1.get(j))
                .copied()
                .ok_or_else(|| bad("short shape list"))
        };
        let spec = match kind {
            "linear" => ModelSpec::linear(dim(0, 1)?, dim(0, 0)?),
            "one_hidden" => ModelSpec::one_hidden(dim(0, 1)?, dim(0, 0)?, dim(2, 0)?),
            other => return Err(bad(&format!("unknown model kind {other}"))),
        };
        let expected: Vec<(String, Vec<usize>)> = spec
            .blocks()
            .into_iter()
            .map(|(n, r, c)| (n.to_owned(), if c == 0 { vec![r] } else { vec![r, c] }))
            .collect();
        if expected != shapes {
            return Err(bad("shape lines do not describe a supported model"));
        }
        Model::from_params(spec, values).map_err(|e| Error::ModelMalformed(e.to_string()))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Step-wise learning rate: `initial · factor^(number of milestones ≤ epoch)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LrSchedule {
    pub initial: f64,
    #[serde(default)]
    pub decay_epochs: Vec<usize>,
    #[serde(default = "one")]
    pub decay_factor: f64,
}

fn one() -> f64 {
    1.0
}

impl LrSchedule {
    pub fn constant(lr: f64) -> Self {
        Self {
            initial: lr,
            decay_epochs: Vec::new(),
            decay_factor: 1.0,
        }
    }

    pub fn at(&self, epoch: usize) -> f64 {
        let passed = self.decay_epochs.iter().filter(|&&m| m <= epoch).count();
        self.initial * self.decay_factor.powi(passed as i32)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: LrSchedule,
    pub momentum: f64,
    pub weight_decay: f64,
    pub seed: u64,
    pub fr: FrConfig,
    pub loss: LossKind,
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidHyperparameter(m));
        if self.epochs < 1 {
            return bad("epochs must be at least 1".into());
        }
        if self.batch_size < 1 {
            return bad("batch size must be at least 1".into());
        }
        if !(self.lr.initial > 0.0) || !(self.lr.decay_factor > 0.0) {
            return bad("learning rate and decay factor must be positive".into());
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!(
                "momentum must lie in [0, 1), got {}",
                self.momentum
            ));
        }
        if !(self.weight_decay >= 0.0) {
            return bad("weight decay must be >= 0".into());
        }
        self.fr.validate()?;
        self.loss.validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    /// Mean per-sample base loss over the epoch's batches.
    pub base_loss: f64,
    /// Sample-weighted mean of the per-batch fairness penalties.
    pub fr_penalty: f64,
    pub objective: f64,
    /// Accuracy against the noisy training labels after the epoch.
    pub train_accuracy: f64,
    /// Accuracy against the clean evaluation labels after the epoch.
    pub eval_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub accuracy: f64,
    /// `None` for classes absent from the corpus.
    pub per_class: Vec<Option<f64>>,
    /// `None` when the corpus has no assignment; inner `None` for empty groups.
    pub per_group: Option<Vec<Option<f64>>>,
    /// Softmax mass on each sample's clean label.
    pub clean_label_probs: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub per_epoch: Vec<EpochRecord>,
    pub final_eval: Evaluation,
    pub best_epoch: usize,
    pub best_epoch_accuracy: f64,
    pub threshold: Option<f64>,
    pub model: Model,
}

impl TrainReport {
    /// One JSON line per epoch followed by a summary line.
    pub fn to_jsonl(&self) -> String {
        #[derive(Serialize)]
        struct Summary<'a> {
            record: &'static str,
            accuracy: f64,
            per_class_accuracy: &'a [Option<f64>],
            per_group_accuracy: &'a Option<Vec<Option<f64>>>,
            best_epoch: usize,
            best_epoch_accuracy: f64,
            threshold: Option<f64>,
            model: &'a ModelSpec,
        }
        #[derive(Serialize)]
        struct Line<'a> {
            record: &'static str,
            #[serde(flatten)]
            epoch: &'a EpochRecord,
        }
        let mut out = String::new();
        for e in &self.per_epoch {
            out.push_str(
                &serde_json::to_string(&Line {
                    record: "epoch",
                    epoch: e,
                })
                .expect("serializable"),
            );
            out.push('\n');
        }
        let summary = Summary {
            record: "summary",
            accuracy: self.final_eval.accuracy,
            per_class_accuracy: &self.final_eval.per_class,
            per_group_accuracy: &self.final_eval.per_group,
            best_epoch: self.best_epoch,
            best_epoch_accuracy: self.best_epoch_accuracy,
            threshold: self.threshold,
            model: &self.model.spec,
        };
        out.push_str(&serde_json::to_string(&summary).expect("serializable"));
        out.push('\n');
        out
    }
}

/// Accuracy breakdown of `model` against the clean labels of `corpus`.
pub fn evaluate(model: &Model, corpus: &LabeledCorpus) -> Result<Evaluation> {
    let clean = corpus.require_clean()?;
    let k = corpus.class_count();
    let mut class_hits = vec![0usize; k];
    let mut class_n = vec![0usize; k];
    let groups = corpus.groups();
    let gc = groups.map_or(0, |g| g.group_count());
    let mut group_hits = vec![0usize; gc];
    let mut group_n = vec![0usize; gc];
    let mut hits = 0usize;
    let mut probs = Vec::with_capacity(corpus.len());
    for i in 0..corpus.len() {
        let z = model.logits(corpus.row(i));
        let y = clean[i];
        let ok = argmax(&z) == y;
        probs.push(softmax_probs(&z).get(y).copied().unwrap_or(0.0));
        hits += ok as usize;
        class_n[y] += 1;
        class_hits[y] += ok as usize;
        if let Some(g) = groups {
            let gi = g.ids()[i];
            group_n[gi] += 1;
            group_hits[gi] += ok as usize;
        }
    }
    let ratio = |h: usize, n: usize| (n > 0).then(|| h as f64 / n as f64);
    Ok(Evaluation {
        accuracy: if corpus.is_empty() {
            0.0
        } else {
            hits as f64 / corpus.len() as f64
        },
        per_class: class_hits
            .iter()
            .zip(&class_n)
            .map(|(&h, &n)| ratio(h, n))
            .collect(),
        per_group: groups.map(|_| {
            group_hits
                .iter()
                .zip(&group_n)
                .map(|(&h, &n)| ratio(h, n))
                .collect()
        }),
        clean_label_probs: probs,
    })
}

fn noisy_accuracy(model: &Model, corpus: &LabeledCorpus) -> f64 {
    if corpus.is_empty() {
        return 0.0;
    }
    let hits = (0..corpus.len())
        .filter(|&i| model.predict(corpus.row(i)) == corpus.noisy_labels()[i])
        .count();
    hits as f64 / corpus.len() as f64
}

/// Empirical noisy-label frequencies, every count floored at 1.
pub fn noisy_priors(corpus: &LabeledCorpus) -> Vec<f64> {
    let mut counts = vec![0usize; corpus.class_count()];
    for &y in corpus.noisy_labels() {
        counts[y] += 1;
    }
    let floored: Vec<f64> = counts.iter().map(|&c| c.max(1) as f64).collect();
    let total: f64 = floored.iter().sum();
    floored.into_iter().map(|c| c / total).collect()
}

/// Result of one forward/backward pass over a batch.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchOutcome {
    /// Mean base loss plus fairness penalty.
    pub objective: f64,
    pub base_loss_sum: f64,
    pub penalty: f64,
    pub grad: Vec<f64>,
}

/// Combined objective over `rows` and its gradient with respect to the
/// model parameters (weight decay excluded). `peers` gives, for peer loss,
/// the feature row and the label row of each sample's peer.
pub fn batch_objective(
    model: &Model,
    corpus: &LabeledCorpus,
    rows: &[usize],
    loss: &LossKind,
    fr: &FrConfig,
    priors: &[f64],
    peers: Option<(&[usize], &[usize])>,
) -> Result<BatchOutcome> {
    let m = rows.len();
    let k = model.spec.class_count;
    let noisy = corpus.noisy_labels();
    let mut grad = vec![0.0; model.params.len()];
    let inv_m = 1.0 / m as f64;

    let mut base_sum = 0.0;
    let mut dlogits: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut hidden: Vec<Vec<f64>> = Vec::with_capacity(m);
    let mut probs = Vec::with_capacity(m);
    let mut noisy_probs = Vec::with_capacity(m);
    for (slot, &i) in rows.iter().enumerate() {
        let x = corpus.row(i);
        let (z, hid) = model.forward(x);
        let y = noisy[i];
        let (value, g) = match (loss, peers) {
            (LossKind::Peer { weight }, Some((feat_rows, label_rows))) => {
                let pf = feat_rows[slot];
                let (pz, phid) = model.forward(corpus.row(pf));
                let (v, g, pg) = peer_loss_grad(&z, y, &pz, noisy[label_rows[slot]], *weight)?;
                let scaled: Vec<f64> = pg.iter().map(|v| v * inv_m).collect();
                model.backward(corpus.row(pf), &phid, &scaled, &mut grad);
                (v, g)
            }
            _ => loss.value_grad(&z, y, priors)?,
        };
        base_sum += value;
        let p = softmax_probs(&z);
        noisy_probs.push(p[y]);
        probs.push(p);
        dlogits.push(g.into_iter().map(|v| v * inv_m).collect());
        hidden.push(hid);
    }

    let mut penalty = 0.0;
    if fr.is_active() {
        let groups = corpus.require_groups()?;
        let ids: Vec<usize> = rows.iter().map(|&i| groups.ids()[i]).collect();
        let (pen, dp) = fr_penalty_grad(&noisy_probs, &ids, fr);
        penalty = pen;
        for slot in 0..m {
            let y = noisy[rows[slot]];
            let py = noisy_probs[slot];
            for j in 0..k {
                let delta = if j == y { 1.0 } else { 0.0 };
                dlogits[slot][j] += dp[slot] * py * (delta - probs[slot][j]);
            }
        }
    }

    for (slot, &i) in rows.iter().enumerate() {
        model.backward(corpus.row(i), &hidden[slot], &dlogits[slot], &mut grad);
    }
    Ok(BatchOutcome {
        objective: base_sum * inv_m + penalty,
        base_loss_sum: base_sum,
        penalty,
        grad,
    })
}

/// Trains a model on the noisy labels of `corpus`, evaluating on the clean
/// labels of `eval_corpus` after every epoch.
pub fn train(
    corpus: &LabeledCorpus,
    eval_corpus: &LabeledCorpus,
    spec: ModelSpec,
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    corpus.ensure_valid()?;
    eval_corpus.ensure_valid()?;
    eval_corpus.require_clean()?;
    if corpus.is_empty() {
        return Err(Error::InvalidParameter("training corpus is empty".into()));
    }
    if spec.input_dim != corpus.dim() || spec.class_count != corpus.class_count() {
        return Err(Error::InvalidParameter(format!(
            "model expects d={} K={}, corpus has d={} K={}",
            spec.input_dim,
            spec.class_count,
            corpus.dim(),
            corpus.class_count()
        )));
    }
    if eval_corpus.dim() != corpus.dim() || eval_corpus.class_count() != corpus.class_count() {
        return Err(Error::InvalidParameter(
            "evaluation corpus shape differs from training corpus".into(),
        ));
    }
    if config.fr.is_active() {
        let groups = corpus.groups().ok_or(Error::MissingGroupAssignment)?;
        if let FrLambda::PerGroup(v) = &config.fr.lambda {
            if v.len() != groups.group_count() {
                return Err(Error::InvalidHyperparameter(format!(
                    "{} per-group multipliers for {} groups",
                    v.len(),
                    groups.group_count()
                )));
            }
        }
    }

    let n = corpus.len();
    let priors = noisy_priors(corpus);
    let mut model = Model::init(spec, config.seed)?;
    let mut velocity = vec![0.0; model.params.len()];
    let mut per_epoch = Vec::with_capacity(config.epochs);
    let mut best = (0usize, f64::NEG_INFINITY);
    let mut peer_rng = rng::stream(config.seed, tag::PEER_PAIRING, 0);
    let mut order: Vec<usize> = (0..n).collect();

    for epoch in 0..config.epochs {
        let lr = config.lr.at(epoch);
        let mut shuffle_rng = rng::stream(config.seed, tag::EPOCH_SHUFFLE, epoch as u32);
        order.sort_unstable();
        order.shuffle(&mut shuffle_rng);
        let mut base_total = 0.0;
        let mut pen_total = 0.0;
        for (batch, rows) in order.chunks(config.batch_size).enumerate() {
            let pairing = if let LossKind::Peer { .. } = config.loss {
                let mut a = rows.to_vec();
                let mut b = rows.to_vec();
                a.shuffle(&mut peer_rng);
                b.shuffle(&mut peer_rng);
                Some((a, b))
            } else {
                None
            };
            let out = batch_objective(
                &model,
                corpus,
                rows,
                &config.loss,
                &config.fr,
                &priors,
                pairing.as_ref().map(|(a, b)| (a.as_slice(), b.as_slice())),
            )?;
            if !out.objective.is_finite() || out.grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, batch });
            }
            base_total += out.base_loss_sum;
            pen_total += out.penalty * rows.len() as f64;
            for ((w, v), g) in model
                .params
                .iter_mut()
                .zip(velocity.iter_mut())
                .zip(&out.grad)
            {
                let g = g + config.weight_decay * *w;
                *v = config.momentum * *v + g;
                *w -= lr * *v;
            }
        }
        if model.params.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFiniteLoss {
                epoch,
                batch: order.len().div_ceil(config.batch_size) - 1,
            });
        }
        let eval = evaluate(&model, eval_corpus)?;
        if eval.accuracy > best.1 {
            best = (epoch, eval.accuracy);
        }
        let base_loss = base_total / n as f64;
        let fr_penalty = pen_total / n as f64;
        per_epoch.push(EpochRecord {
            epoch,
            learning_rate: lr,
            base_loss,
            fr_penalty,
            objective: base_loss + fr_penalty,
            train_accuracy: noisy_accuracy(&model, corpus),
            eval_accuracy: eval.accuracy,
        });
    }

    let final_eval = evaluate(&model, eval_corpus)?;
    Ok(TrainReport {
        per_epoch,
        final_eval,
        best_epoch: best.0,
        best_epoch_accuracy: best.1,
        threshold: model.threshold(),
        model,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::GroupAssignment;

    fn tiny() -> LabeledCorpus {
        LabeledCorpus::new(
            vec![-2.0, -1.0, 1.0, 2.0],
            1,
            Some(vec![0, 0, 1, 1]),
            vec![0, 0, 1, 1],
            2,
            Some(GroupAssignment::new(vec![0, 1, 0, 1], 2).unwrap()),
        )
        .unwrap()
    }

    fn config(epochs: usize) -> TrainConfig {
        TrainConfig {
            epochs,
            batch_size: 2,
            lr: LrSchedule::constant(0.1),
            momentum: 0.9,
            weight_decay: 0.0,
            seed: 1,
            fr: FrConfig::off(),
            loss: LossKind::Ce,
        }
    }

    #[test]
    fn model_text_round_trip() {
        for spec in [ModelSpec::linear(3, 4), ModelSpec::one_hidden(2, 5, 3)] {
            let m = Model::init(spec, 9).unwrap();
            let back = Model::from_text(&m.to_text()).unwrap();
            assert_eq!(back, m);
        }
        let text = Model::init(ModelSpec::linear(2, 2), 0).unwrap().to_text();
        assert!(text.starts_with("model linear\nshape W 2 2\nshape b 2\n"));
    }

    #[test]
    fn init_ranges() {
        let m = Model::init(ModelSpec::linear(4, 3), 2).unwrap();
        assert!(m.params[..12].iter().all(|w| w.abs() <= 0.5));
        assert!(m.params[12..].iter().all(|&b| b == 0.0));
    }

    #[test]
    fn uniform_logits_predict_class_zero() {
        let m = Model::from_params(ModelSpec::linear(1, 3), vec![0.0; 6]).unwrap();
        let c = LabeledCorpus::clean(vec![0.0; 6], 1, vec![0, 1, 2, 0, 1, 2], 3).unwrap();
        let e = evaluate(&m, &c).unwrap();
        assert_eq!(e.per_class, vec![Some(1.0), Some(0.0), Some(0.0)]);
        assert!((e.accuracy - 2.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn threshold_of_linear_model() {
        // z0 = -x, z1 = x - 1 → class 1 above x = 0.5
        let m = Model::from_params(ModelSpec::linear(1, 2), vec![-1.0, 1.0, 0.0, -1.0]).unwrap();
        assert_eq!(m.threshold(), Some(0.5));
        assert_eq!(m.predict(&[0.6]), 1);
        assert_eq!(m.predict(&[0.4]), 0);
    }

    #[test]
    fn missing_groups_rejected_when_fr_active() {
        let c = tiny().with_groups(None);
        let mut cfg = config(1);
        cfg.fr = FrConfig::shared(1.0);
        assert!(matches!(
            train(&c, &c, ModelSpec::linear(1, 2), &cfg),
            Err(Error::MissingGroupAssignment)
        ));
    }

    #[test]
    fn deterministic_and_learns() {
        let c = tiny();
        let a = train(&c, &c, ModelSpec::linear(1, 2), &config(20)).unwrap();
        let b = train(&c, &c, ModelSpec::linear(1, 2), &config(20)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.final_eval.accuracy, 1.0);
        assert_eq!(a.per_epoch.len(), 20);
    }

    #[test]
    fn lr_schedule_steps() {
        let s = LrSchedule {
            initial: 1.0,
            decay_epochs: vec![2, 4],
            decay_factor: 0.1,
        };
        assert_eq!(s.at(1), 1.0);
        assert!((s.at(2) - 0.1).abs() < 1e-15);
        assert!((s.at(5) - 0.01).abs() < 1e-15);
    }

    #[test]
    fn huge_learning_rate_reports_non_finite_loss() {
        let c =
            LabeledCorpus::clean(vec![-1e10, 1e10, -2e10, 2e10], 1, vec![1, 0, 1, 0], 2).unwrap();
        let mut cfg = config(50);
        cfg.lr = LrSchedule::constant(1e300);
        cfg.momentum = 0.0;
        let err = train(&c, &c, ModelSpec::linear(1, 2), &cfg).unwrap_err();
        assert!(matches!(err, Error::NonFiniteLoss { .. }));
    }
}
