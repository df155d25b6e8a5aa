#![allow(dead_code)]

use circwass::Histogram;
use rand::Rng;

/// Random unit-mass histogram; roughly a third of draws zero out some bins
/// to exercise degenerate transport problems.
pub fn random_hist<R: Rng>(rng: &mut R, n: usize) -> Histogram {
    let sparse = rng.gen_bool(0.35);
    let mut v: Vec<f64> = (0..n)
        .map(|_| {
            if sparse && rng.gen_bool(0.5) {
                0.0
            } else {
                -rng.gen::<f64>().max(1e-300).ln()
            }
        })
        .collect();
    if v.iter().all(|&x| x == 0.0) {
        v[rng.gen_range(0..n)] = 1.0;
    }
    Histogram::new(&v, true).unwrap()
}

/// Strictly positive histogram, as produced by a softmax.
pub fn random_interior<R: Rng>(rng: &mut R, n: usize) -> Histogram {
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.2..1.0)).collect();
    Histogram::new(&v, true).unwrap()
}

/// Perturbs coordinate `k` of `s` by `h` without renormalizing.
pub fn bump(s: &Histogram, k: usize, h: f64) -> Histogram {
    let mut v = s.values().to_vec();
    v[k] += h;
    Histogram::unnormalized(&v).unwrap()
}
