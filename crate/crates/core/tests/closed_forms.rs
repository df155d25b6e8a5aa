//! Closed-form solvers checked against the exact LP and finite differences.

mod common;

use circwass::circular::*;
use circwass::ground_metric::{ground_matrix, line_ground_matrix, GroundMetricSpec};
use circwass::oracle::lp_exact;
use circwass::Histogram;
use common::{bump, random_hist, random_interior};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn lp(s: &Histogram, t: &Histogram, spec: &GroundMetricSpec) -> f64 {
    lp_exact(s, t, &ground_matrix(spec)).unwrap().cost
}

fn convex_specs(n: usize) -> Vec<GroundMetricSpec> {
    vec![
        GroundMetricSpec::power(2.0, n).unwrap(),
        GroundMetricSpec::power(3.0, n).unwrap(),
        GroundMetricSpec::huber(2.0, n).unwrap(),
    ]
}

#[test]
fn closed_forms_match_lp() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let prec = QuantilePrecision::new(1_000_000).unwrap();
    for n in [3, 4, 5, 8, 13, 16] {
        for _ in 0..60 {
            let s = random_hist(&mut rng, n);
            let t = random_hist(&mut rng, n);
            let lin = GroundMetricSpec::linear(n);
            let gap = (linear_circular(&s, &t).unwrap().value - lp(&s, &t, &lin)).abs();
            assert!(gap <= 1e-6, "linear n={n} gap {gap}");

            let step = GroundMetricSpec::step(n);
            let gap = (step_l1(&s, &t).unwrap().value - lp(&s, &t, &step)).abs();
            assert!(gap <= 1e-9, "step n={n} gap {gap}");

            for spec in convex_specs(n) {
                let c = convex_circular(&s, &t, &spec, prec).unwrap().value;
                let gap = (c - lp(&s, &t, &spec)).abs();
                assert!(gap <= prec.error_bound(&spec), "{} n={n} gap {gap}", spec.name());
            }

            let j = rng.gen_range(0..n);
            let one = Histogram::one_hot(j, n).unwrap();
            for spec in convex_specs(n).into_iter().chain([lin, step, GroundMetricSpec::chord(n)]) {
                let gap = (one_hot_loss(&s, j, &spec).unwrap().value - lp(&s, &one, &spec)).abs();
                assert!(gap <= 1e-9, "one-hot {} n={n} gap {gap}", spec.name());
            }
        }
    }
}

#[test]
fn convex_error_shrinks_with_precision() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let spec = GroundMetricSpec::power(2.0, 13).unwrap();
    for _ in 0..20 {
        let s = random_hist(&mut rng, 13);
        let t = random_hist(&mut rng, 13);
        let exact = lp(&s, &t, &spec);
        for m in [1_000u64, 100_000, 100_000_000] {
            let prec = QuantilePrecision::new(m).unwrap();
            let gap = (convex_circular(&s, &t, &spec, prec).unwrap().value - exact).abs();
            assert!(gap <= prec.error_bound(&spec), "M={m} gap {gap}");
        }
    }
}

#[test]
fn convex_with_linear_metric_matches_linear_closed_form() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let prec = QuantilePrecision::default();
    for n in [3, 7, 16] {
        let spec = GroundMetricSpec::linear(n);
        for _ in 0..50 {
            let s = random_hist(&mut rng, n);
            let t = random_hist(&mut rng, n);
            let a = linear_circular(&s, &t).unwrap().value;
            let b = convex_circular(&s, &t, &spec, prec).unwrap().value;
            assert!((a - b).abs() <= prec.error_bound(&spec));
        }
    }
}

#[test]
fn line_wasserstein_matches_lp_on_line_matrix() {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    for n in [3, 8, 16] {
        for spec in [GroundMetricSpec::linear(n), GroundMetricSpec::power(2.0, n).unwrap()] {
            let d = line_ground_matrix(&spec);
            for _ in 0..30 {
                let s = random_hist(&mut rng, n);
                let t = random_hist(&mut rng, n);
                let exact = lp_exact(&s, &t, &d).unwrap().cost;
                let v = line_wasserstein(&s, &t, &spec).unwrap().value;
                assert!((v - exact).abs() <= 1e-6, "{} vs {exact}", v);
            }
        }
    }
}

#[test]
fn line_distance_bounds_circular_distance() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..100 {
        let s = random_hist(&mut rng, 12);
        let t = random_hist(&mut rng, 12);
        let spec = GroundMetricSpec::linear(12);
        let line = line_wasserstein(&s, &t, &spec).unwrap().value;
        let circ = linear_circular(&s, &t).unwrap().value;
        assert!(circ <= line + 1e-12);
    }
}

#[test]
fn one_hot_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(15);
    for n in [4, 9, 36] {
        let specs = [
            GroundMetricSpec::linear(n),
            GroundMetricSpec::power(2.0, n).unwrap(),
            GroundMetricSpec::huber(1.5, n).unwrap(),
            GroundMetricSpec::chord(n),
        ];
        for spec in specs {
            let s = random_interior(&mut rng, n);
            let j = rng.gen_range(0..n);
            let g = one_hot_grad(&s, j, &spec).unwrap();
            let h = 1e-6;
            for k in 0..n {
                let up = one_hot_loss(&bump(&s, k, h), j, &spec).unwrap().value;
                let dn = one_hot_loss(&bump(&s, k, -h), j, &spec).unwrap().value;
                let fd = (up - dn) / (2.0 * h);
                assert!((fd - g[k]).abs() <= 1e-6 * g[k].abs().max(1.0), "fd {fd} vs {}", g[k]);
            }
        }
    }
}

#[test]
fn linear_gradient_matches_finite_differences_away_from_kinks() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let mut checked = 0;
    for _ in 0..100 {
        let s = random_interior(&mut rng, 8);
        let t = random_interior(&mut rng, 8);
        if linear_kink_margin(&s, &t).unwrap() <= 1e-3 {
            continue;
        }
        checked += 1;
        let g = linear_circular_grad(&s, &t).unwrap();
        let h = 1e-6;
        for k in 0..8 {
            let up = linear_circular(&bump(&s, k, h), &t).unwrap().value;
            let dn = linear_circular(&bump(&s, k, -h), &t).unwrap().value;
            let fd = (up - dn) / (2.0 * h);
            assert!((fd - g[k]).abs() <= 1e-4, "coord {k}: fd {fd} vs {}", g[k]);
        }
    }
    assert!(checked >= 90, "only {checked} points cleared the kink filter");
}

#[test]
fn linear_gradient_example() {
    let s = Histogram::new(&[0.5, 0.5, 0.0, 0.0], false).unwrap();
    let t = Histogram::new(&[0.0, 0.0, 0.5, 0.5], false).unwrap();
    let g = linear_circular_grad(&s, &t).unwrap();
    let base = linear_circular(&s, &t).unwrap().value;
    let h = 1e-6;
    let phi = [0.5, 1.0, 0.5, 0.0];
    for k in 0..4 {
        let right = (linear_circular(&bump(&s, k, h), &t).unwrap().value - base) / h;
        if s.values()[k] >= h {
            let left = (base - linear_circular(&bump(&s, k, -h), &t).unwrap().value) / h;
            // piecewise linear: the gradient lies between the one-sided slopes
            assert!(g[k] >= left - 1e-4 && g[k] <= right + 1e-4, "{k}: {g:?} [{left}, {right}]");
        } else {
            // zero-mass bins admit only an upward step
            assert!(g[k] <= right + 1e-4, "{k}: {g:?} right {right}");
        }
        let kink = (k..4).any(|j| f64::abs(phi[j] - 0.5) <= 1e-3);
        if !kink {
            assert!((g[k] - right).abs() <= 1e-4, "{k}: {} vs {right}", g[k]);
        }
    }
}

/// The LP cost is convex and piecewise linear in `s`; along `e_a - e_b` its
/// one-sided slopes bracket any valid gradient difference `g_a - g_b`.
#[test]
fn convex_gradient_is_a_transport_subgradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let prec = QuantilePrecision::default();
    for n in [5, 8, 16] {
        for spec in convex_specs(n) {
            let d = ground_matrix(&spec);
            for _ in 0..10 {
                let s = random_interior(&mut rng, n);
                let t = random_interior(&mut rng, n);
                let g = convex_circular_grad(&s, &t, &spec, prec).unwrap();
                let base = lp_exact(&s, &t, &d).unwrap().cost;
                let h = 1e-5;
                for _ in 0..5 {
                    let a = rng.gen_range(0..n);
                    let b = (a + rng.gen_range(1..n)) % n;
                    let mv = |sign: f64| {
                        let mut v = s.values().to_vec();
                        v[a] += sign * h;
                        v[b] -= sign * h;
                        lp_exact(&Histogram::unnormalized(&v).unwrap(), &t, &d).unwrap().cost
                    };
                    let right = (mv(1.0) - base) / h;
                    let left = (base - mv(-1.0)) / h;
                    let dg = g[a] - g[b];
                    let tol = 1e-4 * spec.max_cost().max(1.0);
                    assert!(
                        dg >= left - tol && dg <= right + tol,
                        "{} n={n} ({a},{b}): {dg} not in [{left}, {right}]",
                        spec.name()
                    );
                }
            }
        }
    }
}

#[test]
fn dispatch_routes_by_metric() {
    let n = 6;
    let s = Histogram::new(&[0.1, 0.2, 0.3, 0.1, 0.2, 0.1], false).unwrap();
    let t = Histogram::uniform(n).unwrap();
    let prec = QuantilePrecision::default();
    let cases = [
        (GroundMetricSpec::linear(n), SolverTag::LinearCircular),
        (GroundMetricSpec::step(n), SolverTag::StepL1),
        (GroundMetricSpec::chord(n), SolverTag::LpExact),
        (GroundMetricSpec::power(2.0, n).unwrap(), SolverTag::ConvexCircular),
        (GroundMetricSpec::huber(1.0, n).unwrap(), SolverTag::ConvexCircular),
    ];
    for (spec, tag) in cases {
        let v = dispatch_loss(&s, Target::Dense(&t), &spec, prec).unwrap();
        assert_eq!(v.solver, tag);
        let (v2, g) = dispatch_loss_grad(&s, Target::Dense(&t), &spec, prec).unwrap();
        assert_eq!(v2.value, v.value);
        assert_eq!(g.len(), n);
        let exact = lp(&s, &t, &spec);
        assert!((v.value - exact).abs() <= prec.error_bound(&spec).max(1e-9));
        let oh = dispatch_loss(&s, Target::OneHot(2), &spec, prec).unwrap();
        assert_eq!(oh.solver, SolverTag::OneHot);
    }
}

#[test]
fn rejected_inputs() {
    let s = Histogram::uniform(4).unwrap();
    let t = Histogram::uniform(5).unwrap();
    assert!(matches!(linear_circular(&s, &t), Err(circwass::Error::LengthMismatch(4, 5))));
    let chord = GroundMetricSpec::chord(4);
    assert!(matches!(
        convex_circular(&s, &s, &chord, QuantilePrecision::default()),
        Err(circwass::Error::NonConvexSpec(_))
    ));
    let p = GroundMetricSpec::power(2.0, 4).unwrap();
    assert!(convex_circular(&s, &s, &p, QuantilePrecision::new(3).unwrap()).is_err());
    assert!(one_hot_loss(&s, 4, &p).is_err());
}

fn hist_pair(max_n: usize) -> impl Strategy<Value = (Histogram, Histogram)> {
    (3..=max_n).prop_flat_map(|n| {
        let v = prop::collection::vec(0.0f64..1.0, n);
        (v.clone(), v).prop_filter_map("zero mass", |(a, b)| {
            Some((Histogram::new(&a, true).ok()?, Histogram::new(&b, true).ok()?))
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn rotation_equivariance((s, t) in hist_pair(20), k in -40i64..40) {
        let n = s.n_bins();
        let (sr, tr) = (s.rotate(k), t.rotate(k));
        let a = linear_circular(&s, &t).unwrap().value;
        let b = linear_circular(&sr, &tr).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-9);
        let spec = GroundMetricSpec::power(2.0, n).unwrap();
        let prec = QuantilePrecision::default();
        let a = convex_circular(&s, &t, &spec, prec).unwrap().value;
        let b = convex_circular(&sr, &tr, &spec, prec).unwrap().value;
        prop_assert!((a - b).abs() <= 2.0 * prec.error_bound(&spec));
        let j = t.argmax();
        let jr = (j as i64 + k).rem_euclid(n as i64) as usize;
        let a = one_hot_loss(&s, j, &spec).unwrap().value;
        let b = one_hot_loss(&sr, jr, &spec).unwrap().value;
        prop_assert!((a - b).abs() <= 1e-12);
    }

    #[test]
    fn symmetric_and_zero_on_diagonal((s, t) in hist_pair(20)) {
        let n = s.n_bins();
        prop_assert!((linear_circular(&s, &t).unwrap().value - linear_circular(&t, &s).unwrap().value).abs() <= 1e-9);
        prop_assert!(linear_circular(&s, &s).unwrap().value.abs() <= 1e-12);
        let spec = GroundMetricSpec::huber(2.0, n).unwrap();
        let prec = QuantilePrecision::default();
        let ab = convex_circular(&s, &t, &spec, prec).unwrap().value;
        let ba = convex_circular(&t, &s, &spec, prec).unwrap().value;
        prop_assert!((ab - ba).abs() <= 2.0 * prec.error_bound(&spec));
        prop_assert!(convex_circular(&s, &s, &spec, prec).unwrap().value <= prec.error_bound(&spec));
        prop_assert!(ab >= 0.0 && step_l1(&s, &t).unwrap().value >= 0.0);
    }

    #[test]
    fn linear_closed_form_is_a_metric((s, t) in hist_pair(12), seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let u = random_hist(&mut rng, s.n_bins());
        let st = linear_circular(&s, &t).unwrap().value;
        let tu = linear_circular(&t, &u).unwrap().value;
        let su = linear_circular(&s, &u).unwrap().value;
        prop_assert!(su <= st + tu + 1e-9);
    }
}
