#![no_main]

//! Decodes bytes into a pair of histograms and checks every closed form
//! against the exact LP.

use circwass::circular::{convex_circular, linear_circular, one_hot_loss, step_l1};
use circwass::ground_metric::ground_matrix;
use circwass::oracle::lp_exact;
use circwass::{GroundMetricSpec, Histogram, QuantilePrecision};
use libfuzzer_sys::fuzz_target;

fn decode(bytes: &[u8]) -> Option<Histogram> {
    let v: Vec<f64> = bytes.iter().map(|&b| b as f64).collect();
    Histogram::new(&v, true).ok()
}

fuzz_target!(|data: &[u8]| {
    let Some((&n, rest)) = data.split_first() else { return };
    let n = (n as usize % 15) + 2;
    if rest.len() < 2 * n + 1 {
        return;
    }
    let (Some(s), Some(t)) = (decode(&rest[..n]), decode(&rest[n..2 * n])) else { return };
    let j = rest[2 * n] as usize % n;
    let lp = |spec: &GroundMetricSpec, t: &Histogram| lp_exact(&s, t, &ground_matrix(spec)).unwrap().cost;

    let linear = GroundMetricSpec::linear(n);
    assert!((linear_circular(&s, &t).unwrap().value - lp(&linear, &t)).abs() <= 1e-6);
    let step = GroundMetricSpec::step(n);
    assert!((step_l1(&s, &t).unwrap().value - lp(&step, &t)).abs() <= 1e-9);

    let prec = QuantilePrecision::new(1_000_000).unwrap();
    let hot = Histogram::one_hot(j, n).unwrap();
    for spec in [
        GroundMetricSpec::power(2.0, n).unwrap(),
        GroundMetricSpec::huber(2.0, n).unwrap(),
        GroundMetricSpec::chord(n),
    ] {
        assert!((one_hot_loss(&s, j, &spec).unwrap().value - lp(&spec, &hot)).abs() <= 1e-9);
        if spec.kind != circwass::MetricKind::Chord {
            let gap = (convex_circular(&s, &t, &spec, prec).unwrap().value - lp(&spec, &t)).abs();
            assert!(gap <= prec.error_bound(&spec));
        }
    }
});
