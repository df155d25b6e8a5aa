//! Probability histograms on `N` circular bins.
//!
//! Bin `i` corresponds to the angle `i * 360 / N` degrees. A [`Histogram`]
//! normally carries unit mass; [`Histogram::unnormalized`] builds one with an
//! arbitrary positive total for intermediate computations such as finite
//! differences, and the distinction is kept in the type via
//! [`Histogram::is_normalized`].

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance on the total mass of a normalized histogram.
pub const MASS_TOL: f64 = 1e-9;

/// Entries in `[-NEG_CLAMP, 0)` are rounded to zero on construction.
pub const NEG_CLAMP: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Histogram {
    values: Vec<f64>,
    normalized: bool,
}

fn sanitize(values: &[f64]) -> Result<Vec<f64>> {
    if values.is_empty() {
        return Err(Error::EmptyInput);
    }
    if values.len() < 2 {
        return Err(Error::TooFewBins(values.len()));
    }
    values
        .iter()
        .enumerate()
        .map(|(index, &v)| {
            if !v.is_finite() {
                Err(Error::NonFinite(index))
            } else if v < -NEG_CLAMP {
                Err(Error::NegativeMass { index, value: v })
            } else {
                Ok(v.max(0.0))
            }
        })
        .collect()
}

impl Histogram {
    /// Builds a unit-mass histogram. With `normalize` set the entries are
    /// divided by their sum, otherwise they must already sum to one.
    pub fn new(values: &[f64], normalize: bool) -> Result<Self> {
        let mut values = sanitize(values)?;
        let total: f64 = values.iter().sum();
        if normalize {
            if total <= 0.0 {
                return Err(Error::ZeroTotal);
            }
            values.iter_mut().for_each(|v| *v /= total);
        } else if (total - 1.0).abs() > MASS_TOL {
            return Err(Error::NotNormalized(total));
        }
        Ok(Self {
            values,
            normalized: true,
        })
    }

    /// Builds a histogram whose entries are kept as given, whatever their sum.
    pub fn unnormalized(values: &[f64]) -> Result<Self> {
        let values = sanitize(values)?;
        Ok(Self {
            values,
            normalized: false,
        })
    }

    pub fn one_hot(index: usize, n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewBins(n));
        }
        if index >= n {
            return Err(Error::IndexOutOfRange { index, n });
        }
        let mut values = vec![0.0; n];
        values[index] = 1.0;
        Ok(Self {
            values,
            normalized: true,
        })
    }

    pub fn uniform(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::TooFewBins(n));
        }
        Ok(Self {
            values: vec![1.0 / n as f64; n],
            normalized: true,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_bins(&self) -> usize {
        self.values.len()
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn total(&self) -> f64 {
        self.values.iter().sum()
    }

    pub fn argmax(&self) -> usize {
        let mut best = 0;
        for (i, &v) in self.values.iter().enumerate() {
            if v > self.values[best] {
                best = i;
            }
        }
        best
    }

    pub fn cumulative(&self) -> CumulativeDistribution {
        let mut acc = 0.0;
        let prefix: Vec<f64> = self
            .values
            .iter()
            .map(|v| {
                acc += v;
                acc
            })
            .collect();
        CumulativeDistribution { prefix, total: acc }
    }

    /// Cyclic shift: `out[i] = in[(i - k) mod N]`.
    pub fn rotate(&self, k: i64) -> Self {
        let n = self.values.len();
        let shift = k.rem_euclid(n as i64) as usize;
        let mut values = vec![0.0; n];
        for (i, &v) in self.values.iter().enumerate() {
            values[(i + shift) % n] = v;
        }
        Self {
            values,
            normalized: self.normalized,
        }
    }

    pub(crate) fn check_same_len(&self, other: &Self) -> Result<usize> {
        if self.n_bins() != other.n_bins() {
            return Err(Error::LengthMismatch(self.n_bins(), other.n_bins()));
        }
        Ok(self.n_bins())
    }
}

impl TryFrom<Vec<f64>> for Histogram {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Histogram::new(&values, false)
    }
}

impl From<Histogram> for Vec<f64> {
    fn from(h: Histogram) -> Self {
        h.values
    }
}

/// Prefix sums of a histogram with quantile (pseudo-inverse) access.
#[derive(Debug, Clone, PartialEq)]
pub struct CumulativeDistribution {
    prefix: Vec<f64>,
    total: f64,
}

impl CumulativeDistribution {
    pub fn prefix(&self) -> &[f64] {
        &self.prefix
    }

    pub fn total(&self) -> f64 {
        self.total
    }

    /// Cumulative mass at any integer index, extended periodically:
    /// `S(i + N) = S(i) + total` and `S(-1) = 0`.
    pub fn at(&self, i: i64) -> f64 {
        let n = self.prefix.len() as i64;
        let q = i.div_euclid(n);
        let r = i.rem_euclid(n) as usize;
        self.prefix[r] + q as f64 * self.total
    }

    /// Smallest bin `i` with `S(i) >= level`.
    pub fn quantile(&self, level: f64) -> Result<usize> {
        if !(level > 0.0 && level <= self.total + NEG_CLAMP) {
            return Err(Error::OutOfRange {
                level,
                total: self.total,
            });
        }
        let idx = self.prefix.partition_point(|&p| p < level);
        // level may exceed the last prefix by rounding
        Ok(idx.min(self.prefix.len() - 1))
    }
}
