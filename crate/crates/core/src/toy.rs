//! Synthetic circular-label data, a one-hidden-layer softmax classifier and
//! angular evaluation metrics.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::circular::{dispatch_loss_grad, one_hot_loss_matrix, QuantilePrecision, Target};
use crate::error::{Error, Result};
use crate::ground_metric::{
    arc_length, blend_adaptive, centroid_distances, BlendSchedule, rescale_learned, ArcScale,
    GroundMatrix, GroundMetricSpec, MetricKind,
};
use crate::histogram::Histogram;
use crate::labels::{conservative_label, SmoothingSpec};
use crate::oracle::lp_exact;

/// Number of (cos, sin) harmonics in the feature map.
pub const HARMONICS: usize = 3;
/// Standard deviation of the additive feature noise.
pub const FEATURE_NOISE: f64 = 0.1;

/// Label corruption: a wrapped Binomial(k, p) offset for inliers, and a
/// uniformly random bin with probability `outlier_rate`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelNoise {
    pub k: usize,
    pub p: f64,
    pub outlier_rate: f64,
}

impl LabelNoise {
    pub fn none() -> Self {
        Self {
            k: 0,
            p: 0.5,
            outlier_rate: 0.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.p) || !(0.0..=1.0).contains(&self.outlier_rate) {
            return Err(Error::BadParameter(format!(
                "noise p={} and outlier rate={} must lie in [0, 1]",
                self.p, self.outlier_rate
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sample {
    pub features: Vec<f64>,
    pub true_bin: usize,
    pub noisy_bin: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticDataset {
    pub n_bins: usize,
    pub noise: LabelNoise,
    pub samples: Vec<Sample>,
}

impl SyntheticDataset {
    pub fn feature_dim(&self) -> usize {
        2 * HARMONICS
    }
}

/// Noise-free angle embedding of bin `b`.
pub fn embed_bin(b: usize, n: usize) -> Vec<f64> {
    let theta = 2.0 * PI * b as f64 / n as f64;
    (1..=HARMONICS)
        .flat_map(|h| {
            let a = h as f64 * theta;
            [a.cos(), a.sin()]
        })
        .collect()
}

/// [`gen_synthetic_with`] at the default feature noise.
pub fn gen_synthetic(
    n: usize,
    n_samples: usize,
    noise: LabelNoise,
    seed: u64,
) -> Result<SyntheticDataset> {
    gen_synthetic_with(n, n_samples, noise, FEATURE_NOISE, seed)
}

/// Samples true bins uniformly, embeds them with [`embed_bin`] plus
/// Gaussian noise of standard deviation `feature_sigma`, and corrupts labels
/// according to `noise`.
pub fn gen_synthetic_with(
    n: usize,
    n_samples: usize,
    noise: LabelNoise,
    feature_sigma: f64,
    seed: u64,
) -> Result<SyntheticDataset> {
    if !(feature_sigma >= 0.0 && feature_sigma.is_finite()) {
        return Err(Error::BadParameter(format!("feature noise {feature_sigma} must be >= 0")));
    }
    if n < 4 {
        return Err(Error::BadParameter(format!("need at least 4 bins, got {n}")));
    }
    if n_samples < n {
        return Err(Error::BadParameter(format!(
            "{n_samples} samples cannot cover {n} bins"
        )));
    }
    noise.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, feature_sigma).expect("valid sigma");
    let offset = Binomial::new(noise.k as u64, noise.p).expect("validated p");
    let shift = (noise.k / 2) as i64;
    let samples = (0..n_samples)
        .map(|_| {
            let true_bin = rng.gen_range(0..n);
            let features = embed_bin(true_bin, n)
                .into_iter()
                .map(|x| x + jitter.sample(&mut rng))
                .collect();
            let noisy_bin = if rng.gen_bool(noise.outlier_rate) {
                rng.gen_range(0..n)
            } else {
                let o = offset.sample(&mut rng) as i64 - shift;
                (true_bin as i64 + o).rem_euclid(n as i64) as usize
            };
            Sample {
                features,
                true_bin,
                noisy_bin,
            }
        })
        .collect();
    Ok(SyntheticDataset {
        n_bins: n,
        noise,
        samples,
    })
}

/// Named smoothing settings; all use `xi = 0.1, eta = 0.05` and a `K = 10`
/// window, except `Uniform`, which is plain label smoothing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SmoothingPreset {
    Binomial,
    Poisson,
    Gaussian,
    Uniform,
}

impl SmoothingPreset {
    pub fn spec(&self) -> SmoothingSpec {
        match self {
            Self::Binomial => SmoothingSpec::binomial(10, 0.5, 0.1, 0.05),
            Self::Poisson => SmoothingSpec::poisson(10, 5.0, 0.1, 0.05),
            Self::Gaussian => SmoothingSpec::gaussian(10, 2.5, 0.1, 0.05),
            Self::Uniform => SmoothingSpec::uniform(0.05),
        }
    }

    fn name(&self) -> &'static str {
        match self {
            Self::Binomial => "binomial",
            Self::Poisson => "poisson",
            Self::Gaussian => "gaussian",
            Self::Uniform => "uniform",
        }
    }

    fn parse(s: &str) -> Option<Self> {
        Some(match s {
            "binomial" => Self::Binomial,
            "poisson" => Self::Poisson,
            "gaussian" => Self::Gaussian,
            "uniform" => Self::Uniform,
            _ => return None,
        })
    }
}

/// Training objective.
///
/// Descriptor strings: `ce[-<smoothing>]` or `wass-<metric>[-<smoothing>]`,
/// where `<metric>` is `linear`, `power<rho>`, `huber<tau>`, `chord` or
/// `step` and `<smoothing>` one of `binomial`, `poisson`, `gaussian`,
/// `uniform`. Without smoothing the target is one-hot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "loss", rename_all = "lowercase")]
pub enum LossSpec {
    #[serde(rename = "ce")]
    CrossEntropy {
        smoothing: Option<SmoothingPreset>,
    },
    #[serde(rename = "wass")]
    Wasserstein {
        metric: MetricKind,
        smoothing: Option<SmoothingPreset>,
    },
}

impl LossSpec {
    pub fn smoothing(&self) -> Option<SmoothingPreset> {
        match self {
            Self::CrossEntropy { smoothing } | Self::Wasserstein { smoothing, .. } => *smoothing,
        }
    }
}

impl fmt::Display for LossSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::CrossEntropy { .. } => write!(f, "ce")?,
            Self::Wasserstein { metric, .. } => {
                write!(f, "wass-")?;
                match metric {
                    MetricKind::Linear => write!(f, "linear")?,
                    MetricKind::Power { rho } => write!(f, "power{rho}")?,
                    MetricKind::Huber { tau } => write!(f, "huber{tau}")?,
                    MetricKind::Chord => write!(f, "chord")?,
                    MetricKind::Step => write!(f, "step")?,
                }
            }
        }
        if let Some(p) = self.smoothing() {
            write!(f, "-{}", p.name())?;
        }
        Ok(())
    }
}

fn parse_metric(tok: &str) -> Result<MetricKind> {
    let num = |rest: &str, what: &str| -> Result<f64> {
        let v: f64 = rest
            .parse()
            .map_err(|_| Error::Parse(format!("bad {what} parameter {rest:?}")))?;
        if !v.is_finite() {
            return Err(Error::Parse(format!("non-finite {what} parameter")));
        }
        Ok(v)
    };
    let kind = match tok {
        "linear" => MetricKind::Linear,
        "chord" => MetricKind::Chord,
        "step" => MetricKind::Step,
        _ if tok.starts_with("power") => MetricKind::Power {
            rho: num(&tok[5..], "power")?,
        },
        _ if tok.starts_with("huber") => MetricKind::Huber {
            tau: num(&tok[5..], "huber")?,
        },
        _ => return Err(Error::Parse(format!("unknown metric {tok:?}"))),
    };
    // reuse the spec's parameter checks
    GroundMetricSpec::new(kind, 2)?;
    Ok(kind)
}

impl FromStr for LossSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let toks: Vec<&str> = s.trim().split('-').collect();
        let smoothing = |rest: &[&str]| -> Result<Option<SmoothingPreset>> {
            match rest {
                [] => Ok(None),
                [p] => SmoothingPreset::parse(p)
                    .map(Some)
                    .ok_or_else(|| Error::Parse(format!("unknown smoothing {p:?}"))),
                _ => Err(Error::Parse(format!("trailing tokens in loss {s:?}"))),
            }
        };
        match toks.as_slice() {
            ["ce", rest @ ..] => Ok(Self::CrossEntropy {
                smoothing: smoothing(rest)?,
            }),
            ["wass", m, rest @ ..] => Ok(Self::Wasserstein {
                metric: parse_metric(m)?,
                smoothing: smoothing(rest)?,
            }),
            _ => Err(Error::Parse(format!("unrecognized loss descriptor {s:?}"))),
        }
    }
}

/// Softmax classifier with one tanh hidden layer. Weight matrices are stored
/// row-major: `w1` is `hidden x features`, `w2` is `bins x hidden`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyModel {
    pub features: usize,
    pub hidden: usize,
    pub bins: usize,
    pub w1: Vec<f64>,
    pub b1: Vec<f64>,
    pub w2: Vec<f64>,
    pub b2: Vec<f64>,
}

struct Forward {
    hidden: Vec<f64>,
    probs: Vec<f64>,
    log_probs: Vec<f64>,
}

impl ToyModel {
    pub fn init<R: Rng>(features: usize, hidden: usize, bins: usize, rng: &mut R) -> Self {
        let g1 = Normal::new(0.0, (1.0 / features as f64).sqrt()).expect("positive");
        let g2 = Normal::new(0.0, (1.0 / hidden as f64).sqrt()).expect("positive");
        Self {
            features,
            hidden,
            bins,
            w1: (0..hidden * features).map(|_| g1.sample(rng)).collect(),
            b1: vec![0.0; hidden],
            w2: (0..bins * hidden).map(|_| g2.sample(rng)).collect(),
            b2: vec![0.0; bins],
        }
    }

    fn forward(&self, x: &[f64]) -> Forward {
        let hidden: Vec<f64> = (0..self.hidden)
            .map(|h| {
                let row = &self.w1[h * self.features..(h + 1) * self.features];
                (self.b1[h] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()).tanh()
            })
            .collect();
        let logits: Vec<f64> = (0..self.bins)
            .map(|c| {
                let row = &self.w2[c * self.hidden..(c + 1) * self.hidden];
                self.b2[c] + row.iter().zip(&hidden).map(|(w, a)| w * a).sum::<f64>()
            })
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + logits.iter().map(|l| (l - max).exp()).sum::<f64>().ln();
        let log_probs: Vec<f64> = logits.iter().map(|l| l - lse).collect();
        let probs = log_probs.iter().map(|l| l.exp()).collect();
        Forward {
            hidden,
            probs,
            log_probs,
        }
    }

    /// Softmax output for one feature vector.
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).probs
    }

    /// Hidden activations, the features used by the adaptive ground metric.
    pub fn embed(&self, x: &[f64]) -> Vec<f64> {
        self.forward(x).hidden
    }

    pub fn predict_bin(&self, x: &[f64]) -> usize {
        argmax(&self.forward(x).probs)
    }
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

#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr: f64,
    pub momentum: f64,
    /// `None` trains full-batch.
    pub batch_size: Option<usize>,
    pub hidden: usize,
    pub adaptive: bool,
    /// Initial blend weight of the arc-length term in adaptive mode.
    pub blend_start: f64,
    /// Alternation rounds (one per epoch) over which the blend weight decays
    /// to zero; later epochs use the learned metric alone.
    pub blend_rounds: usize,
    pub blend_schedule: BlendSchedule,
    /// Scale normalization of the learned distances in adaptive mode.
    pub adaptive_scale: ArcScale,
    pub precision: QuantilePrecision,
    pub eval_fraction: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 60,
            lr: 0.05,
            momentum: 0.9,
            batch_size: Some(32),
            hidden: 32,
            adaptive: false,
            blend_start: 10.0,
            blend_rounds: 10,
            // linear-in-weight decay doubles the learned share on its last
            // round; growing the share linearly keeps each swap small
            blend_schedule: BlendSchedule::LinearShare,
            adaptive_scale: ArcScale::Mean,
            precision: QuantilePrecision::new(1_000_000).expect("in range"),
            eval_fraction: 0.2,
            seed: 0,
        }
    }
}

/// One row of the training history.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    /// Mean loss over the epoch's batches, each taken before its update.
    pub train_loss: f64,
    /// Eval-split MAAD in degrees after the epoch.
    pub eval_maad: f64,
    /// Mean expected arc length to the true bin under the predicted
    /// distribution, over the training split, alongside `train_loss`.
    pub expected_arc: f64,
    pub blend_weight: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalSummary {
    pub maad: f64,
    pub median_ae: f64,
    pub acc_pi8: f64,
    pub acc_pi4: f64,
    /// Mean `f(arc(argmax, true))` under the loss's metric (arc length for
    /// cross-entropy); the argmax-regression surrogate, reported only.
    pub argmax_cost: f64,
    pub train_accuracy: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: ToyModel,
    pub history: Vec<EpochRecord>,
    pub summary: EvalSummary,
}

struct Objective {
    loss: LossSpec,
    spec: Option<GroundMetricSpec>,
    labels: Option<Vec<Histogram>>,
    matrix: Option<GroundMatrix>,
    prec: QuantilePrecision,
    n: usize,
}

impl Objective {
    /// Loss value and its gradient with respect to the logits.
    fn eval(&self, fw: &Forward, j: usize) -> Result<(f64, Vec<f64>)> {
        let s = &fw.probs;
        match self.loss {
            LossSpec::CrossEntropy { .. } => {
                let grad: Vec<f64>;
                let value;
                match &self.labels {
                    Some(labels) => {
                        let t = labels[j].values();
                        value = -t.iter().zip(&fw.log_probs).map(|(a, b)| a * b).sum::<f64>();
                        grad = s.iter().zip(t).map(|(a, b)| a - b).collect();
                    }
                    None => {
                        value = -fw.log_probs[j];
                        grad = (0..self.n).map(|i| s[i] - f64::from(i == j)).collect();
                    }
                }
                Ok((value, grad))
            }
            LossSpec::Wasserstein { .. } => {
                let hist = Histogram::new(s, false)?;
                let (value, g, scale) = match &self.matrix {
                    Some(d) => {
                        let (v, g) = match &self.labels {
                            Some(labels) => {
                                let sol = lp_exact(&hist, &labels[j], d)?;
                                (sol.cost, sol.source_potentials)
                            }
                            None => (
                                one_hot_loss_matrix(&hist, j, d)?.value,
                                (0..self.n).map(|i| d.get(i, j)).collect(),
                            ),
                        };
                        (v, g, d.max())
                    }
                    None => {
                        let spec = self.spec.as_ref().expect("wasserstein has a spec");
                        let target = match &self.labels {
                            Some(labels) => Target::Dense(&labels[j]),
                            None => Target::OneHot(j),
                        };
                        let (v, g) = dispatch_loss_grad(&hist, target, spec, self.prec)?;
                        (v.value, g, spec.max_cost())
                    }
                };
                // gradients are taken on the cost scaled to [0, 1] so one
                // learning rate suits every metric; the reported value is raw
                let scale = if scale > 0.0 { scale } else { 1.0 };
                let mean: f64 = s.iter().zip(&g).map(|(a, b)| a * b).sum();
                let grad = s.iter().zip(&g).map(|(a, b)| a * (b - mean) / scale).collect();
                Ok((value, grad))
            }
        }
    }
}

/// Trains a [`ToyModel`] on the first `1 - eval_fraction` of a seeded
/// shuffle of `data`, evaluating on the rest against the true bins.
///
/// With `momentum = 0` and full-batch updates the recorded training loss is
/// non-increasing for learning rates up to about 0.1 (cross-entropy and the
/// scaled transport losses alike).
pub fn train_toy(data: &SyntheticDataset, loss: &LossSpec, cfg: &TrainConfig) -> Result<TrainOutcome> {
    if data.samples.is_empty() {
        return Err(Error::EmptyInput);
    }
    if cfg.epochs == 0 || !(cfg.lr > 0.0 && cfg.lr.is_finite()) {
        return Err(Error::BadParameter("epochs must be >= 1 and lr > 0".into()));
    }
    if !(0.0..1.0).contains(&cfg.eval_fraction) || !(0.0..1.0).contains(&cfg.momentum) {
        return Err(Error::BadParameter(
            "eval fraction and momentum must lie in [0, 1)".into(),
        ));
    }
    if cfg.hidden == 0 || cfg.batch_size == Some(0) {
        return Err(Error::BadParameter("hidden width and batch size must be >= 1".into()));
    }
    let n = data.n_bins;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.samples.len()).collect();
    order.shuffle(&mut rng);
    let n_eval = ((data.samples.len() as f64) * cfg.eval_fraction).round() as usize;
    let (eval_idx, train_idx) = order.split_at(n_eval);
    if train_idx.is_empty() {
        return Err(Error::EmptyInput);
    }
    let mut train_idx = train_idx.to_vec();
    let eval_idx = if eval_idx.is_empty() {
        train_idx.clone()
    } else {
        eval_idx.to_vec()
    };

    let spec = match loss {
        LossSpec::Wasserstein { metric, .. } => Some(GroundMetricSpec::new(*metric, n)?),
        LossSpec::CrossEntropy { .. } => None,
    };
    let labels = match loss.smoothing() {
        Some(p) => Some(
            (0..n)
                .map(|j| conservative_label(j, n, &p.spec()).map(|l| l.histogram))
                .collect::<Result<Vec<_>>>()?,
        ),
        None => None,
    };
    let mut obj = Objective {
        loss: *loss,
        spec,
        labels,
        matrix: None,
        prec: cfg.precision,
        n,
    };

    let dim = data.samples[0].features.len();
    let mut model = ToyModel::init(dim, cfg.hidden, n, &mut rng);
    let mut vel = ToyModel {
        w1: vec![0.0; model.w1.len()],
        b1: vec![0.0; model.b1.len()],
        w2: vec![0.0; model.w2.len()],
        b2: vec![0.0; model.b2.len()],
        ..model.clone()
    };
    let arc_spec = GroundMetricSpec::linear(n);
    let mut history = Vec::with_capacity(cfg.epochs);

    for epoch in 0..cfg.epochs {
        let blend_weight = if cfg.adaptive {
            let w = cfg.blend_schedule.weight(epoch, cfg.blend_rounds, cfg.blend_start);
            if let Some(d) = adaptive_matrix(&model, data, &train_idx, spec.unwrap_or(arc_spec), w, cfg.adaptive_scale)? {
                obj.matrix = Some(d);
            }
            Some(w)
        } else {
            None
        };

        train_idx.shuffle(&mut rng);
        let batch = cfg.batch_size.unwrap_or(train_idx.len()).min(train_idx.len());
        let mut loss_sum = 0.0;
        let mut arc_sum = 0.0;
        for chunk in train_idx.chunks(batch) {
            let mut grad = ToyModel {
                w1: vec![0.0; model.w1.len()],
                b1: vec![0.0; model.b1.len()],
                w2: vec![0.0; model.w2.len()],
                b2: vec![0.0; model.b2.len()],
                ..model.clone()
            };
            for &idx in chunk {
                let sample = &data.samples[idx];
                let fw = model.forward(&sample.features);
                let (value, d_logits) = obj.eval(&fw, sample.noisy_bin)?;
                loss_sum += value;
                arc_sum += expected_arc(&fw.probs, sample.true_bin);
                backprop(&model, &mut grad, &sample.features, &fw, &d_logits);
            }
            let k = chunk.len() as f64;
            step(&mut model, &mut vel, &grad, cfg.lr / k, cfg.momentum);
        }
        let train_loss = loss_sum / train_idx.len() as f64;
        if !train_loss.is_finite() || model.w2.iter().any(|w| !w.is_finite()) {
            return Err(Error::DivergedLoss(epoch));
        }
        let (pred, truth) = predictions(&model, data, &eval_idx);
        history.push(EpochRecord {
            epoch,
            train_loss,
            eval_maad: maad(&pred, &truth, n)?,
            expected_arc: arc_sum / train_idx.len() as f64,
            blend_weight,
        });
    }

    let (pred, truth) = predictions(&model, data, &eval_idx);
    let cost_spec = spec.unwrap_or(arc_spec);
    let argmax_cost = pred
        .iter()
        .zip(&truth)
        .map(|(&p, &t)| cost_spec.eval(arc_length(p, t, n).expect("bins in range") as f64))
        .sum::<f64>()
        / pred.len() as f64;
    let train_hits = train_idx
        .iter()
        .filter(|&&i| model.predict_bin(&data.samples[i].features) == data.samples[i].noisy_bin)
        .count();
    let summary = EvalSummary {
        maad: maad(&pred, &truth, n)?,
        median_ae: median_ae(&pred, &truth, n)?,
        acc_pi8: acc_at(&pred, &truth, n, PI / 8.0)?,
        acc_pi4: acc_at(&pred, &truth, n, PI / 4.0)?,
        argmax_cost,
        train_accuracy: train_hits as f64 / train_idx.len() as f64,
    };
    Ok(TrainOutcome {
        model,
        history,
        summary,
    })
}

fn expected_arc(s: &[f64], truth: usize) -> f64 {
    let n = s.len();
    s.iter()
        .enumerate()
        .map(|(i, p)| {
            let d = i.abs_diff(truth);
            p * d.min(n - d) as f64
        })
        .sum()
}

fn predictions(model: &ToyModel, data: &SyntheticDataset, idx: &[usize]) -> (Vec<usize>, Vec<usize>) {
    idx.iter()
        .map(|&i| {
            let s = &data.samples[i];
            (model.predict_bin(&s.features), s.true_bin)
        })
        .unzip()
}

/// Learned ground matrix for one alternation round: centroid distances of
/// L2-normalized hidden features grouped by training label, rescaled to the
/// arc-length range and blended with the arc-length metric. `None` when
/// some class has no training sample.
fn adaptive_matrix(
    model: &ToyModel,
    data: &SyntheticDataset,
    train_idx: &[usize],
    spec: GroundMetricSpec,
    weight: f64,
    scale: ArcScale,
) -> Result<Option<GroundMatrix>> {
    let mut by_class = vec![Vec::new(); data.n_bins];
    for &i in train_idx {
        let s = &data.samples[i];
        let mut h = model.embed(&s.features);
        let norm = h.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            h.iter_mut().for_each(|x| *x /= norm);
        }
        by_class[s.noisy_bin].push(h);
    }
    match centroid_distances(&by_class) {
        Ok(d_bar) => Ok(Some(blend_adaptive(&rescale_learned(&d_bar, scale), &spec, weight)?)),
        Err(Error::MissingClass(_)) => Ok(None),
        Err(e) => Err(e),
    }
}

fn backprop(model: &ToyModel, grad: &mut ToyModel, x: &[f64], fw: &Forward, d_logits: &[f64]) {
    let (f, h) = (model.features, model.hidden);
    let mut d_hidden = vec![0.0; h];
    for (c, &dl) in d_logits.iter().enumerate() {
        grad.b2[c] += dl;
        let row = c * h;
        for k in 0..h {
            grad.w2[row + k] += dl * fw.hidden[k];
            d_hidden[k] += dl * model.w2[row + k];
        }
    }
    for k in 0..h {
        let dz = d_hidden[k] * (1.0 - fw.hidden[k] * fw.hidden[k]);
        grad.b1[k] += dz;
        for (w, xv) in grad.w1[k * f..(k + 1) * f].iter_mut().zip(x) {
            *w += dz * xv;
        }
    }
}

fn step(model: &mut ToyModel, vel: &mut ToyModel, grad: &ToyModel, lr: f64, momentum: f64) {
    let pairs = [
        (&mut model.w1, &mut vel.w1, &grad.w1),
        (&mut model.b1, &mut vel.b1, &grad.b1),
        (&mut model.w2, &mut vel.w2, &grad.w2),
        (&mut model.b2, &mut vel.b2, &grad.b2),
    ];
    for (p, v, g) in pairs {
        for ((pi, vi), gi) in p.iter_mut().zip(v.iter_mut()).zip(g) {
            *vi = momentum * *vi - lr * gi;
            *pi += *vi;
        }
    }
}

fn angular_errors(pred: &[usize], truth: &[usize], n: usize) -> Result<Vec<f64>> {
    if pred.len() != truth.len() {
        return Err(Error::LengthMismatch(pred.len(), truth.len()));
    }
    if pred.is_empty() {
        return Err(Error::EmptyInput);
    }
    pred.iter()
        .zip(truth)
        .map(|(&p, &t)| Ok(arc_length(p, t, n)? as f64 * 360.0 / n as f64))
        .collect()
}

/// Mean absolute angular deviation in degrees.
pub fn maad(pred: &[usize], truth: &[usize], n: usize) -> Result<f64> {
    let e = angular_errors(pred, truth, n)?;
    Ok(e.iter().sum::<f64>() / e.len() as f64)
}

/// Fraction of samples whose angular error is strictly below `threshold`
/// radians.
pub fn acc_at(pred: &[usize], truth: &[usize], n: usize, threshold: f64) -> Result<f64> {
    if !(threshold > 0.0 && threshold <= PI) {
        return Err(Error::BadParameter(format!("threshold {threshold} outside (0, pi]")));
    }
    let e = angular_errors(pred, truth, n)?;
    let limit = threshold.to_degrees();
    Ok(e.iter().filter(|&&x| x < limit).count() as f64 / e.len() as f64)
}

/// Median angular error in degrees; the mean of the central pair for even
/// counts.
pub fn median_ae(pred: &[usize], truth: &[usize], n: usize) -> Result<f64> {
    let mut e = angular_errors(pred, truth, n)?;
    e.sort_by(f64::total_cmp);
    let m = e.len() / 2;
    Ok(if e.len() % 2 == 1 {
        e[m]
    } else {
        0.5 * (e[m - 1] + e[m])
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::binomial_pmf;

    #[test]
    fn metric_examples() {
        assert_eq!(maad(&[3, 5], &[3, 5], 8).unwrap(), 0.0);
        assert_eq!(maad(&[0], &[7], 8).unwrap(), 45.0);
        let m = maad(&[1, 35, 18], &[0, 0, 0], 36).unwrap();
        assert!((m - 200.0 / 3.0).abs() < 1e-12);

        assert_eq!(acc_at(&[4, 4], &[4, 4], 36, PI / 8.0).unwrap(), 1.0);
        assert_eq!(acc_at(&[1, 35, 5], &[0, 0, 4], 36, PI / 8.0).unwrap(), 1.0);
        assert_eq!(acc_at(&[0, 9, 0, 9], &[0, 0, 0, 0], 36, PI / 4.0).unwrap(), 0.5);

        assert_eq!(median_ae(&[2, 2], &[2, 2], 36).unwrap(), 0.0);
        assert_eq!(median_ae(&[1, 2, 3], &[0, 0, 0], 36).unwrap(), 20.0);
        assert_eq!(median_ae(&[1, 2, 3, 10], &[0, 0, 0, 0], 36).unwrap(), 25.0);

        assert!(matches!(maad(&[0], &[0, 1], 8), Err(Error::LengthMismatch(1, 2))));
        assert!(acc_at(&[0], &[0], 8, 0.0).is_err());
        assert!(maad(&[], &[], 8).is_err());
    }

    #[test]
    fn metrics_invariances() {
        let pred = [0, 5, 17, 30, 35];
        let truth = [3, 5, 20, 1, 12];
        let base = maad(&pred, &truth, 36).unwrap();
        for k in 1..36 {
            let p: Vec<usize> = pred.iter().map(|x| (x + k) % 36).collect();
            let t: Vec<usize> = truth.iter().map(|x| (x + k) % 36).collect();
            assert!((maad(&p, &t, 36).unwrap() - base).abs() < 1e-12);
        }
        let mut last = 0.0;
        for i in 1..=40 {
            let a = acc_at(&pred, &truth, 36, PI * i as f64 / 40.0).unwrap();
            assert!(a >= last);
            last = a;
        }
    }

    #[test]
    fn clean_data_keeps_labels() {
        let d = gen_synthetic(12, 500, LabelNoise::none(), 3).unwrap();
        assert!(d.samples.iter().all(|s| s.noisy_bin == s.true_bin));
        assert_eq!(d.samples[0].features.len(), d.feature_dim());
        assert_eq!(d, gen_synthetic(12, 500, LabelNoise::none(), 3).unwrap());
        assert!(gen_synthetic(3, 500, LabelNoise::none(), 3).is_err());
        assert!(gen_synthetic(12, 11, LabelNoise::none(), 3).is_err());
    }

    #[test]
    fn outliers_are_uniform() {
        let noise = LabelNoise {
            k: 0,
            p: 0.5,
            outlier_rate: 1.0,
        };
        let n = 8;
        let d = gen_synthetic(n, 10_000, noise, 4).unwrap();
        let mut counts = vec![0.0; n];
        for s in &d.samples {
            counts[s.noisy_bin] += 1.0;
        }
        let e = 10_000.0 / n as f64;
        let chi2: f64 = counts.iter().map(|c| (c - e) * (c - e) / e).sum();
        // 99th percentile of chi-square with 7 degrees of freedom
        assert!(chi2 < 18.475, "chi2 {chi2}");
    }

    #[test]
    fn inlier_offsets_follow_binomial() {
        let noise = LabelNoise {
            k: 4,
            p: 0.5,
            outlier_rate: 0.0,
        };
        let n = 36;
        let total = 20_000;
        let d = gen_synthetic(n, total, noise, 5).unwrap();
        let mut counts = [0.0; 5];
        for s in &d.samples {
            let o = (s.noisy_bin as i64 - s.true_bin as i64 + 2).rem_euclid(n as i64);
            assert!(o < 5);
            counts[o as usize] += 1.0;
        }
        let pmf = binomial_pmf(4, 0.5).unwrap();
        for (c, p) in counts.iter().zip(&pmf) {
            let mean = total as f64 * p;
            let sd = (total as f64 * p * (1.0 - p)).sqrt();
            assert!((c - mean).abs() <= 3.0 * sd, "{c} vs {mean}");
        }
    }

    #[test]
    fn mislabel_rate_within_binomial_bound() {
        let noise = LabelNoise {
            k: 10,
            p: 0.5,
            outlier_rate: 0.05,
        };
        let n = 36;
        let total = 5000;
        let d = gen_synthetic(n, total, noise, 6).unwrap();
        let changed = d.samples.iter().filter(|s| s.noisy_bin != s.true_bin).count() as f64;
        let keep = 0.95 * binomial_pmf(10, 0.5).unwrap()[5] + 0.05 / n as f64;
        let p = 1.0 - keep;
        let sd = (total as f64 * p * (1.0 - p)).sqrt();
        assert!((changed - total as f64 * p).abs() <= 3.0 * sd);
    }

    #[test]
    fn loss_descriptors_round_trip() {
        for s in [
            "ce",
            "ce-binomial",
            "wass-linear",
            "wass-power2-binomial",
            "wass-power2.5",
            "wass-huber1.5-gaussian",
            "wass-chord-poisson",
            "wass-step-uniform",
        ] {
            let l: LossSpec = s.parse().unwrap();
            assert_eq!(l.to_string(), s);
            let json = serde_json::to_string(&l).unwrap();
            assert_eq!(serde_json::from_str::<LossSpec>(&json).unwrap(), l);
        }
        for bad in ["", "wass", "wass-power0.5", "wass-huber-1", "ce-foo", "wass-linear-binomial-x", "mse"] {
            assert!(bad.parse::<LossSpec>().is_err(), "{bad}");
        }
    }

    #[test]
    fn softmax_backprop_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = ToyModel::init(6, 5, 8, &mut rng);
        let x: Vec<f64> = (0..6).map(|i| (i as f64 * 0.7).sin()).collect();
        let target = 3;
        let loss_of = |m: &ToyModel| -m.forward(&x).log_probs[target];
        let fw = model.forward(&x);
        let d_logits: Vec<f64> = (0..8).map(|i| fw.probs[i] - f64::from(i == target)).collect();
        let mut grad = ToyModel {
            w1: vec![0.0; model.w1.len()],
            b1: vec![0.0; 5],
            w2: vec![0.0; model.w2.len()],
            b2: vec![0.0; 8],
            ..model.clone()
        };
        backprop(&model, &mut grad, &x, &fw, &d_logits);
        let h = 1e-6;
        for k in 0..model.w1.len() {
            let mut up = model.clone();
            up.w1[k] += h;
            let mut dn = model.clone();
            dn.w1[k] -= h;
            let fd = (loss_of(&up) - loss_of(&dn)) / (2.0 * h);
            assert!((fd - grad.w1[k]).abs() < 1e-7);
        }
        for k in 0..model.w2.len() {
            let mut up = model.clone();
            up.w2[k] += h;
            let mut dn = model.clone();
            dn.w2[k] -= h;
            let fd = (loss_of(&up) - loss_of(&dn)) / (2.0 * h);
            assert!((fd - grad.w2[k]).abs() < 1e-7);
        }
    }
}
