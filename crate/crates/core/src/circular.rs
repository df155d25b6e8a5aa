//! Closed-form and fast Wasserstein solvers on the circle (and the line),
//! with subgradients for use as training losses.
//!
//! | solver | ground metric | target | cost |
//! |---|---|---|---|
//! | [`one_hot_loss`] | any `f` | one-hot | O(N) |
//! | [`linear_circular`] | arc length | dense | O(N) |
//! | [`convex_circular`] | convex `f` | dense | O(N log M) |
//! | [`step_l1`] | indicator | dense | O(N) |
//! | [`line_wasserstein`] | any `f`, no wraparound | dense | O(N) |
//!
//! Concave metrics other than the step function have no fast form;
//! [`dispatch_loss`] falls back to the exact LP for them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ground_metric::{arc_length, ground_matrix, Curvature, GroundMatrix, GroundMetricSpec, MetricKind};
use crate::histogram::Histogram;
use crate::oracle::lp_exact;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverTag {
    OneHot,
    LinearCircular,
    ConvexCircular,
    LineWasserstein,
    StepL1,
    LpExact,
    Sinkhorn,
}

impl SolverTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            SolverTag::OneHot => "one_hot",
            SolverTag::LinearCircular => "linear_circular",
            SolverTag::ConvexCircular => "convex_circular",
            SolverTag::LineWasserstein => "line_wasserstein",
            SolverTag::StepL1 => "step_l1",
            SolverTag::LpExact => "lp_exact",
            SolverTag::Sinkhorn => "sinkhorn",
        }
    }
}

impl std::fmt::Display for SolverTag {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossValue {
    pub value: f64,
    pub solver: SolverTag,
    /// Optimal transport constant (circular cut) when the solver searches one.
    pub alpha_star: Option<f64>,
}

/// Number `M` of unit masses each distribution is quantized into.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuantilePrecision(u64);

impl QuantilePrecision {
    pub const MAX: u64 = 1 << 60;

    pub fn new(m: u64) -> Result<Self> {
        if !(2..=Self::MAX).contains(&m) {
            return Err(Error::BadParameter(format!("precision {m} outside [2, 2^60]")));
        }
        Ok(Self(m))
    }

    pub fn get(&self) -> u64 {
        self.0
    }

    /// Worst-case quantization error of [`convex_circular`] for `spec`.
    pub fn error_bound(&self, spec: &GroundMetricSpec) -> f64 {
        spec.max_cost() * 2.0 * spec.n_bins as f64 / self.0 as f64
    }
}

impl Default for QuantilePrecision {
    fn default() -> Self {
        Self(100_000_000)
    }
}

fn check_index(j: usize, n: usize) -> Result<()> {
    if j >= n {
        return Err(Error::IndexOutOfRange { index: j, n });
    }
    Ok(())
}

fn check_spec(spec: &GroundMetricSpec, n: usize) -> Result<()> {
    if spec.n_bins != n {
        return Err(Error::LengthMismatch(n, spec.n_bins));
    }
    Ok(())
}

/// Loss against a one-hot target: `sum_i s_i f(d(i, j_star))`.
pub fn one_hot_loss(s: &Histogram, j_star: usize, spec: &GroundMetricSpec) -> Result<LossValue> {
    let n = s.n_bins();
    check_index(j_star, n)?;
    check_spec(spec, n)?;
    let value = s
        .values()
        .iter()
        .enumerate()
        .map(|(i, si)| si * spec.eval(arc_length(i, j_star, n).expect("in range") as f64))
        .sum();
    Ok(LossValue {
        value,
        solver: SolverTag::OneHot,
        alpha_star: None,
    })
}

/// Gradient of [`one_hot_loss`] with respect to `s`: the row `f(d(., j_star))`.
pub fn one_hot_grad(s: &Histogram, j_star: usize, spec: &GroundMetricSpec) -> Result<Vec<f64>> {
    let n = s.n_bins();
    check_index(j_star, n)?;
    check_spec(spec, n)?;
    Ok((0..n)
        .map(|i| spec.eval(arc_length(i, j_star, n).expect("in range") as f64))
        .collect())
}

/// One-hot loss under an arbitrary (e.g. learned) ground matrix: only one
/// transport plan exists, so the cost is `sum_i s_i D[i][j_star]`.
pub fn one_hot_loss_matrix(s: &Histogram, j_star: usize, d: &GroundMatrix) -> Result<LossValue> {
    let n = s.n_bins();
    check_index(j_star, n)?;
    if d.n() != n {
        return Err(Error::LengthMismatch(n, d.n()));
    }
    let value = s.values().iter().enumerate().map(|(i, si)| si * d.get(i, j_star)).sum();
    Ok(LossValue {
        value,
        solver: SolverTag::OneHot,
        alpha_star: None,
    })
}

/// `phi_j = S(j) - T(j)`, the running difference of the two cumulatives.
fn prefix_differences(s: &[f64], t: &[f64]) -> Vec<f64> {
    let mut acc = 0.0;
    s.iter()
        .zip(t)
        .map(|(a, b)| {
            acc += a - b;
            acc
        })
        .collect()
}

/// Lower and upper medians of `xs`.
fn medians(xs: &[f64]) -> (f64, f64) {
    let mut buf = xs.to_vec();
    let n = buf.len();
    let lo_idx = (n - 1) / 2;
    let (_, lo, upper) = buf.select_nth_unstable_by(lo_idx, f64::total_cmp);
    let lo = *lo;
    let hi = if n % 2 == 0 {
        upper.iter().copied().fold(f64::INFINITY, f64::min)
    } else {
        lo
    };
    (lo, hi)
}

/// Arc-length Wasserstein distance on the circle:
/// `min_alpha sum_j |phi_j - alpha|`, attained at the median of `phi`.
///
/// Runs in expected O(N) via selection. With an even number of bins the
/// lower median is reported; every point of the median interval gives the
/// same value.
pub fn linear_circular(s: &Histogram, t: &Histogram) -> Result<LossValue> {
    s.check_same_len(t)?;
    let phi = prefix_differences(s.values(), t.values());
    let (alpha, _) = medians(&phi);
    let value = phi.iter().map(|p| (p - alpha).abs()).sum();
    Ok(LossValue {
        value,
        solver: SolverTag::LinearCircular,
        alpha_star: Some(alpha),
    })
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// Subgradient of [`linear_circular`] with respect to `s`, holding the
/// optimal `alpha` fixed: component `n` is `sum_{j >= n} sgn(phi_j - alpha)`.
///
/// The signs are taken against the midpoint of the median interval (the
/// median itself for odd `N`), which makes this the true gradient wherever
/// the loss is differentiable. The other commonly quoted form,
/// `sum_j sgn(phi_j) sum_{i <= j} (delta_{i,n} - s_i)`, does not match
/// finite differences and is not used.
pub fn linear_circular_grad(s: &Histogram, t: &Histogram) -> Result<Vec<f64>> {
    s.check_same_len(t)?;
    let phi = prefix_differences(s.values(), t.values());
    let (lo, hi) = medians(&phi);
    let alpha = 0.5 * (lo + hi);
    let mut grad = vec![0.0; phi.len()];
    let mut acc = 0.0;
    for j in (0..phi.len()).rev() {
        acc += sgn(phi[j] - alpha);
        grad[j] = acc;
    }
    Ok(grad)
}

/// Distance from the median interval to the nearest other prefix difference;
/// the linear loss is differentiable when this is positive.
pub fn linear_kink_margin(s: &Histogram, t: &Histogram) -> Result<f64> {
    s.check_same_len(t)?;
    let mut phi = prefix_differences(s.values(), t.values());
    phi.sort_by(f64::total_cmp);
    let n = phi.len();
    let margin = if n % 2 == 1 {
        let m = n / 2;
        let mut best = f64::INFINITY;
        if m > 0 {
            best = best.min(phi[m] - phi[m - 1]);
        }
        if m + 1 < n {
            best = best.min(phi[m + 1] - phi[m]);
        }
        best
    } else {
        let (a, b) = (n / 2 - 1, n / 2);
        0.5 * (phi[b] - phi[a])
    };
    Ok(margin)
}

/// Integer cumulative unit counts `round(M * S(i) / total)`, last entry `M`.
fn unit_counts(values: &[f64], m: u64) -> Vec<i64> {
    let total: f64 = values.iter().sum();
    let mut acc = 0.0;
    let mut out: Vec<i64> = values
        .iter()
        .map(|v| {
            acc += v;
            ((acc / total) * m as f64).round().clamp(0.0, m as f64) as i64
        })
        .collect();
    // monotone already; pin the end so every unit has a bin
    *out.last_mut().expect("non-empty") = m as i64;
    out
}

/// Quantized circular cumulatives of a pair of histograms, evaluated at a
/// shift `k` of the target levels.
struct CircularQuantiles<'a> {
    src: Vec<i64>,
    tgt: Vec<i64>,
    m: i64,
    n: i64,
    spec: &'a GroundMetricSpec,
}

impl<'a> CircularQuantiles<'a> {
    fn new(s: &[f64], t: &[f64], m: u64, spec: &'a GroundMetricSpec) -> Self {
        Self {
            src: unit_counts(s, m),
            tgt: unit_counts(t, m),
            m: m as i64,
            n: s.len() as i64,
            spec,
        }
    }

    /// Target cumulative extended periodically to all integers.
    fn tgt_at(&self, x: i64) -> i64 {
        let q = x.div_euclid(self.n);
        let r = x.rem_euclid(self.n) as usize;
        self.tgt[r] + q * self.m
    }

    /// Smallest lifted target index whose cumulative reaches unit `u`.
    fn tgt_quantile(&self, u: i64) -> i64 {
        let q = (u - 1).div_euclid(self.m);
        let r = u - q * self.m;
        let j = self.tgt.partition_point(|&c| c < r) as i64;
        q * self.n + j
    }

    fn first_unit_bin(&self, cum: &[i64], from: usize, level: i64) -> usize {
        let mut i = from;
        while cum[i] <= level {
            i += 1;
        }
        i
    }

    /// `sum_{m=1..M} f(|S^-1(m) - T^-1(m + k)|) / M`, by merging the
    /// piecewise-constant quantile functions.
    fn cost(&self, k: i64) -> f64 {
        let mut total = 0.0;
        let mut cur = 0i64;
        let mut i = 0usize;
        let mut x = self.tgt_quantile(1 + k);
        while cur < self.m {
            i = self.first_unit_bin(&self.src, i, cur);
            while self.tgt_at(x) - k <= cur {
                x += 1;
            }
            let end = self.src[i].min(self.tgt_at(x) - k);
            let d = (i as i64 - x).unsigned_abs() as f64;
            total += (end - cur) as f64 * self.spec.eval(d);
            cur = end;
        }
        total / self.m as f64
    }

    /// Runs of units sharing a source bin and a lifted target index at
    /// shift `k`, in unit order.
    fn segments(&self, k: i64) -> Vec<(usize, i64)> {
        let mut out = Vec::new();
        let mut cur = 0i64;
        let mut i = 0usize;
        let mut x = self.tgt_quantile(1 + k);
        while cur < self.m {
            i = self.first_unit_bin(&self.src, i, cur);
            while self.tgt_at(x) - k <= cur {
                x += 1;
            }
            out.push((i, x));
            cur = self.src[i].min(self.tgt_at(x) - k);
        }
        out
    }

    /// Minimizes the convex map `k -> cost(k)` over `[-M, M]` by bisecting
    /// on the sign of the forward difference.
    fn minimize(&self) -> (i64, f64) {
        let (mut lo, mut hi) = (-self.m, self.m);
        // invariant: a minimizer lies in [lo, hi]
        while hi - lo > 2 {
            let mid = lo + (hi - lo) / 2;
            if self.cost(mid + 1) >= self.cost(mid) {
                hi = mid;
            } else {
                lo = mid + 1;
            }
        }
        (lo..=hi)
            .map(|k| (k, self.cost(k)))
            .fold((lo, f64::INFINITY), |best, c| if c.1 < best.1 { c } else { best })
    }
}

/// Circular Wasserstein distance for a convex increasing ground metric.
///
/// Each histogram is quantized into `M` unit masses; for a fixed cut offset
/// `alpha = k / M` the cost pairs the `m`-th source unit with the
/// `(m + k)`-th target unit on the unrolled circle. The cost is convex in `k`,
/// so the optimum is located by bisecting on its forward difference over
/// `k in [-M, M]`, each evaluation merging at most `2N` quantile breakpoints.
///
/// Inputs are rescaled to unit mass. The result is within
/// `f(N/2) * 2N / M` of the exact transport cost.
pub fn convex_circular(
    s: &Histogram,
    t: &Histogram,
    spec: &GroundMetricSpec,
    prec: QuantilePrecision,
) -> Result<LossValue> {
    let q = convex_setup(s, t, spec, prec)?;
    let (k, value) = q.minimize();
    Ok(LossValue {
        value,
        solver: SolverTag::ConvexCircular,
        alpha_star: Some(k as f64 / prec.get() as f64),
    })
}

fn convex_setup<'a>(
    s: &Histogram,
    t: &Histogram,
    spec: &'a GroundMetricSpec,
    prec: QuantilePrecision,
) -> Result<CircularQuantiles<'a>> {
    let n = s.check_same_len(t)?;
    check_spec(spec, n)?;
    if spec.curvature() == Curvature::Concave {
        return Err(Error::NonConvexSpec(spec.name()));
    }
    if prec.get() < n as u64 {
        return Err(Error::BadParameter(format!(
            "precision {} below bin count {n}",
            prec.get()
        )));
    }
    if s.total() <= 0.0 || t.total() <= 0.0 {
        return Err(Error::ZeroTotal);
    }
    Ok(CircularQuantiles::new(s.values(), t.values(), prec.get(), spec))
}

/// Gradient of [`convex_circular`] with respect to `s`: the source dual
/// potential of the optimal coupling, centered so that `<s, grad> = 0`.
///
/// The coupling pairs consecutive runs of source and target units. Along
/// that sequence neighbouring runs share a source bin or a target bin, which
/// pins the potential differences via `u_i + v_j = f(d_ij)`. The optimal cut
/// sits where a source boundary meets a target boundary, so the cyclic
/// sequence breaks into a path there; the walk starts just after the break.
pub fn convex_circular_grad(
    s: &Histogram,
    t: &Histogram,
    spec: &GroundMetricSpec,
    prec: QuantilePrecision,
) -> Result<Vec<f64>> {
    Ok(convex_circular_with_grad(s, t, spec, prec)?.1)
}

/// [`convex_circular`] and [`convex_circular_grad`] sharing one search.
pub fn convex_circular_with_grad(
    s: &Histogram,
    t: &Histogram,
    spec: &GroundMetricSpec,
    prec: QuantilePrecision,
) -> Result<(LossValue, Vec<f64>)> {
    let q = convex_setup(s, t, spec, prec)?;
    let (k, value) = q.minimize();
    let loss = LossValue {
        value,
        solver: SolverTag::ConvexCircular,
        alpha_star: Some(k as f64 / prec.get() as f64),
    };
    let n = q.n as usize;
    let segs = q.segments(k);
    let cost = |i: usize, x: i64| {
        let j = x.rem_euclid(q.n) as usize;
        let d = i.abs_diff(j);
        spec.eval(d.min(n - d) as f64)
    };
    let len = segs.len();
    // a break between seg[p-1] and seg[p] changes both bins
    let is_break = |p: usize| {
        let (a, b) = (segs[(p + len - 1) % len], segs[p]);
        let tgt_a = if p == 0 { a.1 - q.n } else { a.1 };
        a.0 != b.0 && tgt_a != b.1
    };
    let start = (0..len).find(|&p| is_break(p)).unwrap_or(0);

    let mut u = vec![f64::NAN; n];
    let mut v = vec![f64::NAN; n];
    for step in 0..len {
        let p = (start + step) % len;
        let (i, x) = segs[p];
        let j = x.rem_euclid(q.n) as usize;
        match (u[i].is_nan(), v[j].is_nan()) {
            (false, false) => {}
            (false, true) => v[j] = cost(i, x) - u[i],
            (true, false) => u[i] = cost(i, x) - v[j],
            (true, true) => {
                // new component: attach through the cheapest reduced cost
                u[i] = (0..n)
                    .filter(|&jj| !v[jj].is_nan())
                    .map(|jj| cost(i, jj as i64) - v[jj])
                    .fold(f64::INFINITY, f64::min);
                if !u[i].is_finite() {
                    u[i] = 0.0;
                }
                v[j] = cost(i, x) - u[i];
            }
        }
    }
    // bins without mass take the c-transform of the other side
    for j in 0..n {
        if v[j].is_nan() {
            v[j] = (0..n)
                .filter(|&i| !u[i].is_nan())
                .map(|i| cost(i, j as i64) - u[i])
                .fold(f64::INFINITY, f64::min);
        }
    }
    for i in 0..n {
        if u[i].is_nan() {
            u[i] = (0..n).map(|j| cost(i, j as i64) - v[j]).fold(f64::INFINITY, f64::min);
        }
    }
    let total = s.total();
    let mean = u.iter().zip(s.values()).map(|(a, b)| a * b).sum::<f64>() / total;
    Ok((loss, u.into_iter().map(|x| x - mean).collect()))
}

/// Wasserstein cost between histograms on ordered, non-periodic bins:
/// `integral_0^1 f(|S^-1(u) - T^-1(u)|) du`, i.e. the monotone coupling.
/// Exact for linear and convex `f`; for concave `f` this is the cost of the
/// monotone plan, which upper-bounds the optimum.
pub fn line_wasserstein(s: &Histogram, t: &Histogram, spec: &GroundMetricSpec) -> Result<LossValue> {
    let n = s.check_same_len(t)?;
    check_spec(spec, n)?;
    let sc = s.cumulative();
    let tc = t.cumulative();
    let (sp, tp) = (sc.prefix(), tc.prefix());
    let (mut i, mut j) = (0, 0);
    let mut cur = 0.0;
    let mut value = 0.0;
    while i < n && j < n {
        let end = sp[i].min(tp[j]);
        if end > cur {
            value += (end - cur) * spec.eval(i.abs_diff(j) as f64);
            cur = end;
        }
        if sp[i] <= end {
            i += 1;
        }
        if tp[j] <= end {
            j += 1;
        }
    }
    Ok(LossValue {
        value,
        solver: SolverTag::LineWasserstein,
        alpha_star: None,
    })
}

/// Transport cost under the indicator metric: half the l1 distance.
pub fn step_l1(s: &Histogram, t: &Histogram) -> Result<LossValue> {
    s.check_same_len(t)?;
    let value = 0.5
        * s.values()
            .iter()
            .zip(t.values())
            .map(|(a, b)| (a - b).abs())
            .sum::<f64>();
    Ok(LossValue {
        value,
        solver: SolverTag::StepL1,
        alpha_star: None,
    })
}

pub fn step_l1_grad(s: &Histogram, t: &Histogram) -> Result<Vec<f64>> {
    s.check_same_len(t)?;
    Ok(s.values().iter().zip(t.values()).map(|(a, b)| 0.5 * sgn(a - b)).collect())
}

/// Target of a loss evaluation.
#[derive(Debug, Clone, Copy)]
pub enum Target<'a> {
    OneHot(usize),
    Dense(&'a Histogram),
}

/// Routes to the fastest solver that is exact for the metric and target.
pub fn dispatch_loss(
    s: &Histogram,
    target: Target<'_>,
    spec: &GroundMetricSpec,
    prec: QuantilePrecision,
) -> Result<LossValue> {
    match target {
        Target::OneHot(j) => one_hot_loss(s, j, spec),
        Target::Dense(t) => match spec.kind {
            MetricKind::Linear => linear_circular(s, t),
            MetricKind::Step => step_l1(s, t),
            MetricKind::Chord => {
                let sol = lp_exact(s, t, &ground_matrix(spec))?;
                Ok(LossValue {
                    value: sol.cost,
                    solver: SolverTag::LpExact,
                    alpha_star: None,
                })
            }
            MetricKind::Power { .. } | MetricKind::Huber { .. } => convex_circular(s, t, spec, prec),
        },
    }
}

/// Loss and its gradient with respect to `s`, using the same routing as
/// [`dispatch_loss`]. Gradients for dense targets are defined up to an
/// additive constant.
pub fn dispatch_loss_grad(
    s: &Histogram,
    target: Target<'_>,
    spec: &GroundMetricSpec,
    prec: QuantilePrecision,
) -> Result<(LossValue, Vec<f64>)> {
    match target {
        Target::OneHot(j) => Ok((one_hot_loss(s, j, spec)?, one_hot_grad(s, j, spec)?)),
        Target::Dense(t) => match spec.kind {
            MetricKind::Linear => Ok((linear_circular(s, t)?, linear_circular_grad(s, t)?)),
            MetricKind::Step => Ok((step_l1(s, t)?, step_l1_grad(s, t)?)),
            MetricKind::Chord => {
                let sol = lp_exact(s, t, &ground_matrix(spec))?;
                let loss = LossValue {
                    value: sol.cost,
                    solver: SolverTag::LpExact,
                    alpha_star: None,
                };
                Ok((loss, sol.source_potentials))
            }
            MetricKind::Power { .. } | MetricKind::Huber { .. } => {
                convex_circular_with_grad(s, t, spec, prec)
            }
        },
    }
}
