//! Errors, output destinations and shared argument types.

use std::fmt;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use circwass::{GroundMetricSpec, Histogram, MetricKind};
use clap::{Args, ValueEnum};

#[derive(Debug)]
pub enum CliError {
    Lib(circwass::Error),
    Io(PathBuf, io::Error),
    /// An invariant or oracle comparison failed.
    Violation(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        use circwass::Error as E;
        match self {
            Self::Violation(_) => 2,
            Self::Lib(E::NumericalFailure(_) | E::NotConverged { .. } | E::DivergedLoss(_)) => 3,
            Self::Lib(_) | Self::Io(..) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Lib(e) => write!(f, "{e}"),
            Self::Io(p, e) => write!(f, "{}: {e}", p.display()),
            Self::Violation(m) => write!(f, "violation: {m}"),
        }
    }
}

impl From<circwass::Error> for CliError {
    fn from(e: circwass::Error) -> Self {
        Self::Lib(e)
    }
}

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Json,
    Csv,
}

/// Writes `text` to `out`, or stdout when absent.
pub fn emit(out: Option<&Path>, text: &str) -> CliResult<()> {
    match out {
        Some(p) => fs::write(p, text).map_err(|e| CliError::Io(p.to_path_buf(), e)),
        None => {
            let mut stdout = io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .and_then(|_| stdout.flush())
                .map_err(|e| CliError::Io(PathBuf::from("<stdout>"), e))
        }
    }
}

pub fn read_histogram(path: &Path, normalize: bool) -> CliResult<Histogram> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    let raw = circwass::io::parse_histogram(&text)?;
    Ok(Histogram::new(raw.values(), normalize)?)
}

pub fn to_json<T: serde::Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("report types serialize");
    s.push('\n');
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MetricName {
    Linear,
    Power,
    Huber,
    Chord,
    Step,
}

/// Ground metric selection shared by several subcommands.
#[derive(Debug, Clone, Args)]
pub struct MetricArgs {
    #[arg(long, value_enum, default_value = "linear")]
    pub metric: MetricName,
    /// Exponent of the power metric.
    #[arg(long, default_value_t = 2.0)]
    pub rho: f64,
    /// Knee of the Huber metric, in bins.
    #[arg(long, default_value_t = 1.0)]
    pub tau: f64,
}

impl MetricArgs {
    pub fn spec(&self, n: usize) -> CliResult<GroundMetricSpec> {
        let kind = match self.metric {
            MetricName::Linear => MetricKind::Linear,
            MetricName::Power => MetricKind::Power { rho: self.rho },
            MetricName::Huber => MetricKind::Huber { tau: self.tau },
            MetricName::Chord => MetricKind::Chord,
            MetricName::Step => MetricKind::Step,
        };
        Ok(GroundMetricSpec::new(kind, n)?)
    }
}

/// Mean and 95th percentile of a sample, in the sample's units.
pub fn mean_p95(xs: &[f64]) -> (f64, f64) {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    let idx = ((0.95 * sorted.len() as f64).ceil() as usize).clamp(1, sorted.len()) - 1;
    (mean, sorted[idx])
}
