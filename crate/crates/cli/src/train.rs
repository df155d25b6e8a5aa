use std::fs;
use std::path::PathBuf;

use circwass::ground_metric::{ArcScale, BlendSchedule};
use circwass::io::{history_to_csv, parse_loss};
use circwass::toy::{
    gen_synthetic_with, train_toy, EpochRecord, EvalSummary, LabelNoise, LossSpec, TrainConfig,
    FEATURE_NOISE,
};
use circwass::QuantilePrecision;
use clap::{Args, ValueEnum};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{emit, to_json, CliError, CliResult, Format};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScheduleName {
    /// Arc-length weight decays linearly.
    LinearWeight,
    /// Learned share of the blend grows linearly.
    LinearShare,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ScaleName {
    Max,
    Mean,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Comma-separated loss descriptors, e.g. `ce,wass-power2-binomial`.
    #[arg(long, visible_alias = "loss", value_delimiter = ',', default_value = "ce,wass-power2-binomial")]
    pub compare: Vec<String>,
    /// Number of paired seeds; seed i generates both the data and the init.
    #[arg(long, default_value_t = 1)]
    pub seeds: u64,
    /// First seed.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 30)]
    pub epochs: usize,
    /// Learning rates, one per loss or a single shared value. Defaults to a
    /// per-loss rate tuned on the default dataset.
    #[arg(long, value_delimiter = ',')]
    pub lr: Vec<f64>,
    #[arg(long, default_value_t = 0.9)]
    pub momentum: f64,
    /// Mini-batch size; 0 trains full-batch.
    #[arg(long, default_value_t = 32)]
    pub batch_size: usize,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    #[arg(long = "n", visible_alias = "N", default_value_t = 36)]
    pub n: usize,
    #[arg(long, default_value_t = 5000)]
    pub samples: usize,
    /// Inlier label-noise window (wrapped Binomial over K+1 bins).
    #[arg(long, default_value_t = 10)]
    pub noise_k: usize,
    #[arg(long, default_value_t = 0.5)]
    pub noise_p: f64,
    /// Fraction of labels replaced by a uniformly random bin.
    #[arg(long, default_value_t = 0.05)]
    pub outliers: f64,
    #[arg(long, default_value_t = FEATURE_NOISE)]
    pub feature_noise: f64,
    /// Alternate with a ground metric learned from hidden-layer centroids.
    #[arg(long)]
    pub adaptive: bool,
    #[arg(long, default_value_t = 10.0)]
    pub blend_start: f64,
    #[arg(long, default_value_t = 10)]
    pub blend_rounds: usize,
    #[arg(long, value_enum, default_value = "linear-share")]
    pub blend_schedule: ScheduleName,
    #[arg(long, value_enum, default_value = "mean")]
    pub adaptive_scale: ScaleName,
    /// Quantization `M` of the convex solver during training.
    #[arg(long, default_value_t = 1_000_000)]
    pub precision: u64,
    /// Write one history CSV per run into this directory.
    #[arg(long)]
    pub history_dir: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Learning rates tuned per loss family on held-out seeds of the default
/// dataset; a single shared rate mostly measures the loss scale.
fn default_lr(loss: &LossSpec) -> f64 {
    match loss {
        LossSpec::CrossEntropy { .. } => 0.003,
        LossSpec::Wasserstein { smoothing: Some(_), .. } => 10.0,
        LossSpec::Wasserstein { smoothing: None, .. } => 1.0,
    }
}

#[derive(Debug, Serialize)]
struct RunReport {
    loss: String,
    seed: u64,
    lr: f64,
    summary: EvalSummary,
    history: Vec<EpochRecord>,
}

#[derive(Debug, Serialize)]
struct MeanReport {
    loss: String,
    runs: usize,
    maad: f64,
    median_ae: f64,
    acc_pi8: f64,
    acc_pi4: f64,
    train_accuracy: f64,
}

#[derive(Debug, Serialize)]
struct TrainReport {
    runs: Vec<RunReport>,
    means: Vec<MeanReport>,
}

pub fn run(args: &TrainArgs) -> CliResult<()> {
    let losses = args
        .compare
        .iter()
        .map(|s| parse_loss(s))
        .collect::<circwass::Result<Vec<_>>>()?;
    let lrs: Vec<f64> = match args.lr.len() {
        0 => losses.iter().map(default_lr).collect(),
        1 => vec![args.lr[0]; losses.len()],
        k if k == losses.len() => args.lr.clone(),
        k => {
            return Err(circwass::Error::BadParameter(format!(
                "{k} learning rates for {} losses",
                losses.len()
            ))
            .into())
        }
    };
    let noise = LabelNoise {
        k: args.noise_k,
        p: args.noise_p,
        outlier_rate: args.outliers,
    };
    let base = TrainConfig {
        epochs: args.epochs,
        momentum: args.momentum,
        batch_size: (args.batch_size > 0).then_some(args.batch_size),
        hidden: args.hidden,
        adaptive: args.adaptive,
        blend_start: args.blend_start,
        blend_rounds: args.blend_rounds,
        blend_schedule: match args.blend_schedule {
            ScheduleName::LinearWeight => BlendSchedule::LinearWeight,
            ScheduleName::LinearShare => BlendSchedule::LinearShare,
        },
        adaptive_scale: match args.adaptive_scale {
            ScaleName::Max => ArcScale::Max,
            ScaleName::Mean => ArcScale::Mean,
        },
        precision: QuantilePrecision::new(args.precision)?,
        ..TrainConfig::default()
    };

    let jobs: Vec<(usize, u64)> = (0..losses.len())
        .flat_map(|li| (args.seed..args.seed + args.seeds).map(move |seed| (li, seed)))
        .collect();
    // collect keeps job order, so output does not depend on scheduling
    let runs = jobs
        .par_iter()
        .map(|&(li, seed)| {
            let data = gen_synthetic_with(args.n, args.samples, noise, args.feature_noise, seed)?;
            let cfg = TrainConfig {
                lr: lrs[li],
                seed,
                ..base.clone()
            };
            let outcome = train_toy(&data, &losses[li], &cfg)?;
            Ok(RunReport {
                loss: losses[li].to_string(),
                seed,
                lr: lrs[li],
                summary: outcome.summary,
                history: outcome.history,
            })
        })
        .collect::<circwass::Result<Vec<_>>>()?;

    if let Some(dir) = &args.history_dir {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.clone(), e))?;
        for r in &runs {
            let path = dir.join(format!("{}-seed{}.csv", r.loss, r.seed));
            fs::write(&path, history_to_csv(&r.history)).map_err(|e| CliError::Io(path, e))?;
        }
    }
    if args.adaptive {
        for r in &runs {
            for h in &r.history {
                if let Some(w) = h.blend_weight {
                    eprintln!("{} seed {} epoch {}: blend weight {w}", r.loss, r.seed, h.epoch);
                }
            }
        }
    }

    let means = losses
        .iter()
        .map(|loss| {
            let name = loss.to_string();
            let mine: Vec<&EvalSummary> =
                runs.iter().filter(|r| r.loss == name).map(|r| &r.summary).collect();
            let k = mine.len() as f64;
            let avg = |f: fn(&EvalSummary) -> f64| mine.iter().map(|s| f(s)).sum::<f64>() / k;
            MeanReport {
                runs: mine.len(),
                maad: avg(|s| s.maad),
                median_ae: avg(|s| s.median_ae),
                acc_pi8: avg(|s| s.acc_pi8),
                acc_pi4: avg(|s| s.acc_pi4),
                train_accuracy: avg(|s| s.train_accuracy),
                loss: name,
            }
        })
        .collect();
    let report = TrainReport { runs, means };
    let text = match args.format {
        Format::Json => to_json(&report),
        Format::Csv => {
            let mut s = String::from("loss,seed,lr,maad,median_ae,acc_pi8,acc_pi4,train_accuracy\n");
            for r in &report.runs {
                let m = &r.summary;
                s += &format!(
                    "{},{},{},{},{},{},{},{}\n",
                    r.loss, r.seed, r.lr, m.maad, m.median_ae, m.acc_pi8, m.acc_pi4, m.train_accuracy
                );
            }
            for m in &report.means {
                s += &format!(
                    "{},mean,,{},{},{},{},{}\n",
                    m.loss, m.maad, m.median_ae, m.acc_pi8, m.acc_pi4, m.train_accuracy
                );
            }
            s
        }
    };
    emit(args.out.as_deref(), &text)
}
