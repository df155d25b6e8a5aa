//! Arc-length ground distance on the circle and the increasing maps applied
//! on top of it, plus ground-matrix construction and the learned
//! (feature-centroid) ground metric.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shortest bin-count path between `i` and `j` around a circle of `n` bins.
pub fn arc_length(i: usize, j: usize, n: usize) -> Result<usize> {
    for index in [i, j] {
        if index >= n {
            return Err(Error::IndexOutOfRange { index, n });
        }
    }
    let d = i.abs_diff(j);
    Ok(d.min(n - d))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MetricKind {
    Linear,
    Power { rho: f64 },
    Huber { tau: f64 },
    Chord,
    Step,
}

/// Shape of the ground metric relative to arc length.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Curvature {
    Linear,
    Convex,
    Concave,
}

/// An increasing function `f` of arc length on a circle of `n_bins` bins.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GroundMetricSpec {
    #[serde(flatten)]
    pub kind: MetricKind,
    pub n_bins: usize,
}

impl GroundMetricSpec {
    pub fn new(kind: MetricKind, n_bins: usize) -> Result<Self> {
        if n_bins < 2 {
            return Err(Error::TooFewBins(n_bins));
        }
        match kind {
            MetricKind::Power { rho } if !(rho.is_finite() && rho >= 1.0) => {
                return Err(Error::BadParameter(format!("power exponent {rho} must be >= 1")))
            }
            MetricKind::Huber { tau } if !(tau.is_finite() && tau > 0.0) => {
                return Err(Error::BadParameter(format!("huber knee {tau} must be > 0")))
            }
            _ => {}
        }
        Ok(Self { kind, n_bins })
    }

    pub fn linear(n_bins: usize) -> Self {
        Self::new(MetricKind::Linear, n_bins).expect("n_bins >= 2")
    }

    pub fn power(rho: f64, n_bins: usize) -> Result<Self> {
        Self::new(MetricKind::Power { rho }, n_bins)
    }

    pub fn huber(tau: f64, n_bins: usize) -> Result<Self> {
        Self::new(MetricKind::Huber { tau }, n_bins)
    }

    pub fn chord(n_bins: usize) -> Self {
        Self::new(MetricKind::Chord, n_bins).expect("n_bins >= 2")
    }

    pub fn step(n_bins: usize) -> Self {
        Self::new(MetricKind::Step, n_bins).expect("n_bins >= 2")
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            MetricKind::Linear => "linear",
            MetricKind::Power { .. } => "power",
            MetricKind::Huber { .. } => "huber",
            MetricKind::Chord => "chord",
            MetricKind::Step => "step",
        }
    }

    pub fn curvature(&self) -> Curvature {
        match self.kind {
            MetricKind::Linear => Curvature::Linear,
            MetricKind::Power { rho } if rho == 1.0 => Curvature::Linear,
            MetricKind::Power { .. } | MetricKind::Huber { .. } => Curvature::Convex,
            MetricKind::Chord | MetricKind::Step => Curvature::Concave,
        }
    }

    /// Evaluates `f(d)`. Defined for any `d >= 0`; the convex solver evaluates
    /// it on unwrapped distances that may exceed `N/2`.
    pub fn eval(&self, d: f64) -> f64 {
        match self.kind {
            MetricKind::Linear => d,
            MetricKind::Power { rho } => {
                if rho == 2.0 {
                    d * d
                } else {
                    d.powf(rho)
                }
            }
            MetricKind::Huber { tau } => {
                if d <= tau {
                    d * d
                } else {
                    tau * (2.0 * d - tau)
                }
            }
            MetricKind::Chord => {
                let r = self.n_bins as f64 / (2.0 * std::f64::consts::PI);
                2.0 * r * (d / (2.0 * r)).sin()
            }
            MetricKind::Step => {
                if d == 0.0 {
                    0.0
                } else {
                    1.0
                }
            }
        }
    }

    /// `f` at the largest arc length `N/2`.
    pub fn max_cost(&self) -> f64 {
        self.eval(self.n_bins as f64 / 2.0)
    }
}

/// `f(d)` for `0 <= d <= N/2`.
pub fn apply_metric(spec: &GroundMetricSpec, d: f64) -> Result<f64> {
    let half = spec.n_bins as f64 / 2.0;
    if !(d >= 0.0 && d <= half) {
        return Err(Error::BadParameter(format!("distance {d} outside [0, {half}]")));
    }
    Ok(spec.eval(d))
}

/// Dense `N x N` cost matrix, stored row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<Vec<f64>>", into = "Vec<Vec<f64>>")]
pub struct GroundMatrix {
    n: usize,
    entries: Vec<f64>,
}

impl GroundMatrix {
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut entries = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                entries.push(f(i, j));
            }
        }
        Self { n, entries }
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let n = rows.len();
        if n == 0 {
            return Err(Error::EmptyInput);
        }
        let mut entries = Vec::with_capacity(n * n);
        for row in rows {
            if row.len() != n {
                return Err(Error::LengthMismatch(n, row.len()));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::NonFinite(j));
                }
                if v < 0.0 {
                    return Err(Error::NegativeMass { index: j, value: v });
                }
            }
            entries.extend_from_slice(row);
        }
        Ok(Self { n, entries })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[i * self.n + j]
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.entries[i * self.n..(i + 1) * self.n]
    }

    pub fn max(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }

    pub fn rows(&self) -> Vec<Vec<f64>> {
        self.entries.chunks(self.n).map(<[f64]>::to_vec).collect()
    }

    pub fn is_symmetric(&self) -> bool {
        (0..self.n).all(|i| (0..i).all(|j| self.get(i, j) == self.get(j, i)))
    }
}

impl TryFrom<Vec<Vec<f64>>> for GroundMatrix {
    type Error = Error;

    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        Self::from_rows(&rows)
    }
}

impl From<GroundMatrix> for Vec<Vec<f64>> {
    fn from(m: GroundMatrix) -> Self {
        m.rows()
    }
}

/// `D[i][j] = f(arc_length(i, j))` on the spec's circle.
pub fn ground_matrix(spec: &GroundMetricSpec) -> GroundMatrix {
    let n = spec.n_bins;
    // circulant: evaluate f once per distinct arc length
    let row: Vec<f64> = (0..=n / 2).map(|d| spec.eval(d as f64)).collect();
    GroundMatrix::from_fn(n, |i, j| {
        let d = i.abs_diff(j);
        row[d.min(n - d)]
    })
}

/// `D[i][j] = f(|i - j|)` for ordered, non-periodic bins.
pub fn line_ground_matrix(spec: &GroundMetricSpec) -> GroundMatrix {
    GroundMatrix::from_fn(spec.n_bins, |i, j| spec.eval(i.abs_diff(j) as f64))
}

/// Pairwise l1 distances between per-class feature centroids.
///
/// `features_by_class[c]` holds the feature vectors observed for class `c`.
pub fn centroid_distances(features_by_class: &[Vec<Vec<f64>>]) -> Result<Vec<Vec<f64>>> {
    let n = features_by_class.len();
    if n == 0 {
        return Err(Error::EmptyInput);
    }
    let dim = features_by_class
        .iter()
        .flatten()
        .next()
        .map(Vec::len)
        .ok_or(Error::MissingClass(0))?;
    let mut centroids = Vec::with_capacity(n);
    for (class, samples) in features_by_class.iter().enumerate() {
        if samples.is_empty() {
            return Err(Error::MissingClass(class));
        }
        let mut c = vec![0.0; dim];
        for v in samples {
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            c.iter_mut().zip(v).for_each(|(a, b)| *a += b);
        }
        let k = samples.len() as f64;
        c.iter_mut().for_each(|a| *a /= k);
        centroids.push(c);
    }
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in (i + 1)..n {
            let d: f64 = centroids[i]
                .iter()
                .zip(&centroids[j])
                .map(|(a, b)| (a - b).abs())
                .sum();
            out[i][j] = d;
            out[j][i] = d;
        }
    }
    Ok(out)
}

/// How a learned distance matrix is brought onto the arc-length scale.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ArcScale {
    /// Largest entry maps to `N/2`, the largest arc length.
    #[default]
    Max,
    /// Mean off-diagonal entry maps to the mean off-diagonal arc length.
    Mean,
}

/// Rescales a learned distance matrix so its largest entry equals `N/2`,
/// the largest arc length. An all-zero matrix is returned unchanged.
pub fn rescale_to_arc(d_bar: &[Vec<f64>]) -> Vec<Vec<f64>> {
    rescale_learned(d_bar, ArcScale::Max)
}

pub fn rescale_learned(d_bar: &[Vec<f64>], mode: ArcScale) -> Vec<Vec<f64>> {
    let n = d_bar.len();
    let (have, want) = match mode {
        ArcScale::Max => (
            d_bar.iter().flatten().copied().fold(0.0, f64::max),
            n as f64 / 2.0,
        ),
        ArcScale::Mean => {
            let pairs = (n * n.saturating_sub(1)) as f64;
            let arc: usize = (0..n)
                .flat_map(|i| (0..n).map(move |j| i.abs_diff(j).min(n - i.abs_diff(j))))
                .sum();
            (d_bar.iter().flatten().sum::<f64>() / pairs, arc as f64 / pairs)
        }
    };
    if !(have > 0.0) {
        return d_bar.to_vec();
    }
    let scale = want / have;
    d_bar
        .iter()
        .map(|row| row.iter().map(|v| v * scale).collect())
        .collect()
}

/// Blends `f` of a learned distance matrix with `f` of arc length:
/// `(f(d_bar) + w * f(d)) / (1 + w)`.
pub fn blend_adaptive(
    d_bar: &[Vec<f64>],
    spec: &GroundMetricSpec,
    blend_weight: f64,
) -> Result<GroundMatrix> {
    let n = spec.n_bins;
    if d_bar.len() != n {
        return Err(Error::LengthMismatch(n, d_bar.len()));
    }
    if !(blend_weight.is_finite() && blend_weight >= 0.0) {
        return Err(Error::BadParameter(format!(
            "blend weight {blend_weight} must be finite and >= 0"
        )));
    }
    for (i, row) in d_bar.iter().enumerate() {
        if row.len() != n {
            return Err(Error::LengthMismatch(n, row.len()));
        }
        if row[i] != 0.0 {
            return Err(Error::AsymmetricInput(i, i));
        }
        for j in 0..i {
            if (row[j] - d_bar[j][i]).abs() > 1e-12 * (1.0 + row[j].abs()) {
                return Err(Error::AsymmetricInput(i, j));
            }
        }
    }
    let arc = ground_matrix(spec);
    Ok(GroundMatrix::from_fn(n, |i, j| {
        (spec.eval(d_bar[i][j]) + blend_weight * arc.get(i, j)) / (1.0 + blend_weight)
    }))
}

/// Blend weight for alternation round `round` of `rounds`, decaying linearly
/// from `start` to zero and held at zero afterwards.
pub fn blend_schedule(round: usize, rounds: usize, start: f64) -> f64 {
    if rounds <= 1 {
        return 0.0;
    }
    let frac = round as f64 / (rounds - 1) as f64;
    (start * (1.0 - frac)).max(0.0)
}

/// Blend weight for round `round` of `rounds` such that the learned share
/// `1 / (1 + w)` grows linearly from `1 / (1 + start)` to one.
pub fn blend_schedule_share(round: usize, rounds: usize, start: f64) -> f64 {
    if rounds <= 1 || round + 1 >= rounds {
        return 0.0;
    }
    let first = 1.0 / (1.0 + start);
    let share = first + (1.0 - first) * round as f64 / (rounds - 1) as f64;
    1.0 / share - 1.0
}

/// Rule for annealing the blend weight across alternation rounds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlendSchedule {
    /// [`blend_schedule`].
    #[default]
    LinearWeight,
    /// [`blend_schedule_share`].
    LinearShare,
}

impl BlendSchedule {
    pub fn weight(&self, round: usize, rounds: usize, start: f64) -> f64 {
        match self {
            Self::LinearWeight => blend_schedule(round, rounds, start),
            Self::LinearShare => blend_schedule_share(round, rounds, start),
        }
    }
}
