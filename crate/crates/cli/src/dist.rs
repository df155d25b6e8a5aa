use std::path::PathBuf;
use std::time::Instant;

use circwass::circular::dispatch_loss;
use circwass::ground_metric::ground_matrix;
use circwass::oracle::lp_exact;
use circwass::{Histogram, QuantilePrecision, Target};
use clap::Args;
use serde::Serialize;

use crate::output::{emit, read_histogram, to_json, CliResult, Format, MetricArgs};

#[derive(Debug, Args)]
pub struct DistArgs {
    /// Prediction histogram (JSON array or CSV).
    pub a: PathBuf,
    /// Target histogram; omit when using `--one-hot`.
    #[arg(required_unless_present = "one_hot", conflicts_with = "one_hot")]
    pub b: Option<PathBuf>,
    /// Use a one-hot target at this bin instead of a file.
    #[arg(long)]
    pub one_hot: Option<usize>,
    #[command(flatten)]
    pub metric: MetricArgs,
    /// Quantization `M` of the convex solver.
    #[arg(long, default_value_t = 100_000_000)]
    pub precision: u64,
    /// Rescale inputs to unit mass instead of rejecting them.
    #[arg(long)]
    pub normalize: bool,
    /// Also solve the exact LP and report the gap.
    #[arg(long)]
    pub oracle: bool,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct DistReport {
    value: f64,
    solver: String,
    alpha_star: Option<f64>,
    micros: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    lp_value: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    gap: Option<f64>,
}

pub fn run(args: &DistArgs) -> CliResult<()> {
    let s = read_histogram(&args.a, args.normalize)?;
    let n = s.n_bins();
    let t = match (&args.b, args.one_hot) {
        (Some(path), _) => read_histogram(path, args.normalize)?,
        (None, Some(j)) => Histogram::one_hot(j, n)?,
        (None, None) => unreachable!("clap requires one of them"),
    };
    let target = match args.one_hot {
        Some(j) => Target::OneHot(j),
        None => Target::Dense(&t),
    };
    let spec = args.metric.spec(n)?;
    let prec = QuantilePrecision::new(args.precision)?;

    let start = Instant::now();
    let loss = dispatch_loss(&s, target, &spec, prec)?;
    let micros = start.elapsed().as_secs_f64() * 1e6;

    let lp_value = if args.oracle {
        Some(lp_exact(&s, &t, &ground_matrix(&spec))?.cost)
    } else {
        None
    };
    let report = DistReport {
        value: loss.value,
        solver: loss.solver.to_string(),
        alpha_star: loss.alpha_star,
        micros,
        lp_value,
        gap: lp_value.map(|v| (v - loss.value).abs()),
    };
    let text = match args.format {
        Format::Json => to_json(&report),
        Format::Csv => {
            let opt = |x: Option<f64>| x.map(|v| v.to_string()).unwrap_or_default();
            format!(
                "value,solver,alpha_star,micros,lp_value,gap\n{},{},{},{},{},{}\n",
                report.value,
                report.solver,
                opt(report.alpha_star),
                report.micros,
                opt(report.lp_value),
                opt(report.gap)
            )
        }
    };
    emit(args.out.as_deref(), &text)
}
