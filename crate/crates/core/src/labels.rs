//! Conservative target labels: a one-hot label mixed with a wrapped discrete
//! unimodal distribution (inlier noise) and a uniform one (outlier noise).
//!
//! With `xi` the unimodal weight and `eta` the uniform weight, the label is
//! `(1 - xi - eta) * onehot(j) + xi * wrap(p, j) + eta / N`. Setting only
//! `eta` recovers classic uniform label smoothing. Setting `xi = 1`,
//! `eta = 0`, `K = N - 1` with an unnormalized Gaussian corresponds to the
//! older "geometric" soft label; that mode is not provided separately.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::histogram::Histogram;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "lowercase")]
pub enum Family {
    Binomial { p: f64 },
    Poisson { lambda: f64 },
    /// Gaussian density sampled at `0..=K` around `K/2`. `softmax` selects the
    /// exponentiate-and-normalize transform of the density values; otherwise
    /// the densities are normalized directly.
    Gaussian {
        sigma2: f64,
        #[serde(default = "default_true")]
        softmax: bool,
    },
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothingSpec {
    #[serde(flatten)]
    pub family: Family,
    /// Support size is `k + 1` bins.
    pub k: usize,
    pub xi: f64,
    pub eta: f64,
}

impl SmoothingSpec {
    pub fn binomial(k: usize, p: f64, xi: f64, eta: f64) -> Self {
        Self {
            family: Family::Binomial { p },
            k,
            xi,
            eta,
        }
    }

    pub fn poisson(k: usize, lambda: f64, xi: f64, eta: f64) -> Self {
        Self {
            family: Family::Poisson { lambda },
            k,
            xi,
            eta,
        }
    }

    pub fn gaussian(k: usize, sigma2: f64, xi: f64, eta: f64) -> Self {
        Self {
            family: Family::Gaussian { sigma2, softmax: true },
            k,
            xi,
            eta,
        }
    }

    /// Uniform smoothing only.
    pub fn uniform(eta: f64) -> Self {
        Self::binomial(0, 0.5, 0.0, eta)
    }

    pub fn validate(&self) -> Result<()> {
        let unit = |x: f64| x.is_finite() && (0.0..=1.0).contains(&x);
        if !unit(self.xi) || !unit(self.eta) || self.xi + self.eta > 1.0 + 1e-12 {
            return Err(Error::BadParameter(format!(
                "mixture weights xi={} eta={} must lie in [0,1] with xi+eta <= 1",
                self.xi, self.eta
            )));
        }
        self.pmf().map(|_| ())
    }

    pub fn pmf(&self) -> Result<Vec<f64>> {
        match self.family {
            Family::Binomial { p } => binomial_pmf(self.k, p),
            Family::Poisson { lambda } => poisson_pmf(self.k, lambda),
            Family::Gaussian { sigma2, softmax } => gaussian_pmf_with(self.k, sigma2, softmax),
        }
    }
}

/// Normalizes log-weights with the usual max shift.
fn normalize_log(logs: &[f64]) -> Vec<f64> {
    let m = logs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logs.iter().map(|l| (l - m).exp()).collect();
    let z: f64 = w.iter().sum();
    w.into_iter().map(|x| x / z).collect()
}

/// Binomial(K, p) probabilities for `k = 0..=K`.
///
/// Small `K` uses exact integer coefficients so dyadic cases such as
/// `p = 0.5` come out exact; larger `K` is evaluated in log space.
pub fn binomial_pmf(k: usize, p: f64) -> Result<Vec<f64>> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::BadParameter(format!("binomial p={p} must lie in (0,1)")));
    }
    let q = 1.0 - p;
    if k <= EXACT_BINOMIAL_MAX_K {
        let mut choose: u64 = 1;
        let mut out = Vec::with_capacity(k + 1);
        for i in 0..=k {
            if i > 0 {
                // exact: choose * (k-i+1) is divisible by i
                choose = choose * (k - i + 1) as u64 / i as u64;
            }
            out.push(choose as f64 * p.powi(i as i32) * q.powi((k - i) as i32));
        }
        return Ok(out);
    }
    let (lp, lq) = (p.ln(), q.ln());
    let mut log_choose = 0.0;
    let mut out = Vec::with_capacity(k + 1);
    for i in 0..=k {
        if i > 0 {
            log_choose += ((k - i + 1) as f64).ln() - (i as f64).ln();
        }
        out.push((log_choose + i as f64 * lp + (k - i) as f64 * lq).exp());
    }
    Ok(out)
}

// C(50, 25) * 50 < 2^53, so coefficients and products stay exact
const EXACT_BINOMIAL_MAX_K: usize = 50;

/// Poisson(lambda) masses truncated to `k = 0..=K` and renormalized.
pub fn poisson_pmf(k: usize, lambda: f64) -> Result<Vec<f64>> {
    if !(lambda.is_finite() && lambda > 0.0) {
        return Err(Error::BadParameter(format!("poisson lambda={lambda} must be > 0")));
    }
    let ll = lambda.ln();
    let mut log_fact = 0.0;
    let logs: Vec<f64> = (0..=k)
        .map(|i| {
            if i > 0 {
                log_fact += (i as f64).ln();
            }
            i as f64 * ll - lambda - log_fact
        })
        .collect();
    Ok(normalize_log(&logs))
}

/// Gaussian density with mean `K/2` and variance `sigma2` at `x = 0..=K`,
/// turned into a distribution by a softmax over the density values.
pub fn gaussian_pmf(k: usize, sigma2: f64) -> Result<Vec<f64>> {
    gaussian_pmf_with(k, sigma2, true)
}

pub fn gaussian_pmf_with(k: usize, sigma2: f64, softmax: bool) -> Result<Vec<f64>> {
    if !(sigma2.is_finite() && sigma2 > 0.0) {
        return Err(Error::BadParameter(format!("gaussian sigma2={sigma2} must be > 0")));
    }
    let mu = k as f64 / 2.0;
    let norm = (2.0 * std::f64::consts::PI * sigma2).sqrt();
    let dens: Vec<f64> = (0..=k)
        .map(|x| (-(x as f64 - mu).powi(2) / (2.0 * sigma2)).exp() / norm)
        .collect();
    if softmax {
        Ok(normalize_log(&dens))
    } else {
        let z: f64 = dens.iter().sum();
        Ok(dens.into_iter().map(|d| d / z).collect())
    }
}

/// Places `pmf[k]` on bin `(j_star - floor(K/2) + k) mod N`, summing masses
/// that land on the same bin when the support is wider than the circle.
pub fn wrap_center(pmf: &[f64], j_star: usize, n: usize) -> Result<Vec<f64>> {
    if j_star >= n {
        return Err(Error::IndexOutOfRange { index: j_star, n });
    }
    if pmf.is_empty() {
        return Err(Error::EmptyInput);
    }
    let half = ((pmf.len() - 1) / 2) as i64;
    let mut out = vec![0.0; n];
    for (k, &p) in pmf.iter().enumerate() {
        let bin = (j_star as i64 - half + k as i64).rem_euclid(n as i64) as usize;
        out[bin] += p;
    }
    Ok(out)
}

/// A smoothed target and the class it was built around.
#[derive(Debug, Clone, PartialEq)]
pub struct ConservativeLabel {
    pub histogram: Histogram,
    pub j_star: usize,
}

pub fn conservative_label(j_star: usize, n: usize, spec: &SmoothingSpec) -> Result<ConservativeLabel> {
    if n < 2 {
        return Err(Error::TooFewBins(n));
    }
    if j_star >= n {
        return Err(Error::IndexOutOfRange { index: j_star, n });
    }
    spec.validate()?;
    let keep = 1.0 - spec.xi - spec.eta;
    let floor = spec.eta / n as f64;
    let mut values = vec![floor; n];
    if spec.xi > 0.0 {
        let wrapped = wrap_center(&spec.pmf()?, j_star, n)?;
        values.iter_mut().zip(&wrapped).for_each(|(v, w)| *v += spec.xi * w);
    }
    values[j_star] += keep;
    if spec.xi == 0.0 && spec.eta == 0.0 {
        // exact one-hot, no rounding from the mixture terms
        values = vec![0.0; n];
        values[j_star] = 1.0;
    }
    Ok(ConservativeLabel {
        histogram: Histogram::new(&values, false)?,
        j_star,
    })
}
