use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use circwass::io::{parse_histogram, parse_history_csv};
use serde_json::Value;

fn circwass(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_circwass"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    assert!(
        out.status.success(),
        "exit {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(out: &Output) -> Value {
    serde_json::from_str(&stdout(out)).unwrap()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn dist_routes_and_reports() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.json", "[0.1, 0.2, 0.3, 0.4]");
    let b = write(dir.path(), "b.csv", "bin,value\n0,0.4\n1,0.3\n2,0.2\n3,0.1\n");

    let r = json(&circwass(&["dist", &a, &b, "--metric", "power", "--rho", "2", "--oracle"]));
    assert_eq!(r["solver"], "convex_circular");
    assert!(r["gap"].as_f64().unwrap() < 1e-6);
    assert!(r["micros"].as_f64().unwrap() >= 0.0);

    let same = json(&circwass(&["dist", &a, &a, "--metric", "linear"]));
    assert_eq!(same["value"].as_f64(), Some(0.0));

    let chord = json(&circwass(&["dist", &a, &b, "--metric", "chord"]));
    assert_eq!(chord["solver"], "lp_exact");

    let hot = json(&circwass(&["dist", &a, "--one-hot", "3", "--metric", "step"]));
    assert_eq!(hot["solver"], "one_hot");
    assert!((hot["value"].as_f64().unwrap() - 0.6).abs() < 1e-12);
}

#[test]
fn dist_rejects_bad_input_with_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let a = write(dir.path(), "a.json", "[0.5, 0.5]");
    let bad = write(dir.path(), "bad.json", "[0.5, -0.5]");
    let short = write(dir.path(), "short.json", "[0.2, 0.3, 0.5]");
    let counts = write(dir.path(), "counts.json", "[2, 6]");
    for args in [
        vec!["dist", &a, &bad],
        vec!["dist", &a, &short],
        vec!["dist", &a, "missing.json"],
        vec!["dist", &a, &counts],
        vec!["dist", &a],
        vec!["dist", &a, &a, "--metric", "power", "--rho", "0.5"],
        vec!["dist", &a, "--one-hot", "7"],
        vec!["no-such-command"],
    ] {
        let out = circwass(&args);
        assert_eq!(out.status.code(), Some(1), "{args:?}");
    }
    let scaled = json(&circwass(&["dist", &a, &counts, "--normalize"]));
    assert!((scaled["value"].as_f64().unwrap() - 0.25).abs() < 1e-12);
}

#[test]
fn label_matches_arithmetic_and_round_trips() {
    let out = stdout(&circwass(&[
        "label", "--N", "8", "--j", "0", "--family", "binomial", "--K", "4", "--p", "0.5", "--xi",
        "0.1", "--eta", "0.05",
    ]));
    let h = parse_histogram(&out).unwrap();
    let want = [0.89375, 0.03125, 0.0125, 0.00625, 0.00625, 0.00625, 0.0125, 0.03125];
    for (got, want) in h.values().iter().zip(want) {
        assert!((got - want).abs() < 1e-15, "{got} vs {want}");
    }

    let csv = stdout(&circwass(&["label", "--n", "8", "-j", "0", "--format", "csv", "--K", "4"]));
    assert_eq!(parse_histogram(&csv).unwrap(), h);

    let hot = stdout(&circwass(&["label", "--n", "6", "-j", "2", "--xi", "0", "--eta", "0"]));
    assert_eq!(parse_histogram(&hot).unwrap().values(), &[0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);

    let poisson = stdout(&circwass(&[
        "label", "--n", "36", "-j", "0", "--family", "poisson", "--K", "10", "--lambda", "5",
    ]));
    let p = parse_histogram(&poisson).unwrap();
    assert!((p.total() - 1.0).abs() < 1e-12);
    assert_ne!(p.values()[1], p.values()[35], "poisson window is asymmetric");

    let bad = circwass(&["label", "--n", "8", "-j", "9"]);
    assert_eq!(bad.status.code(), Some(1));
}

#[test]
fn label_writes_to_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("label.json");
    let out = circwass(&["label", "--n", "4", "-j", "1", "--out", path.to_str().unwrap()]);
    assert!(stdout(&out).is_empty());
    let h = parse_histogram(&fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(h.argmax(), 1);
}

#[test]
fn fuzz_is_clean_and_deterministic() {
    let args = ["fuzz", "--cases", "500", "--max-n", "16", "--seed", "7"];
    let first = stdout(&circwass(&args));
    let second = stdout(&circwass(&args));
    assert_eq!(first, second);
    let r: Value = serde_json::from_str(&first).unwrap();
    assert_eq!(r["violations"].as_array().unwrap().len(), 0);
    let solvers = r["solvers"].as_array().unwrap();
    assert_eq!(solvers.len(), 4);
    assert_eq!(solvers.iter().map(|s| s["cases"].as_u64().unwrap()).sum::<u64>(), 500);

    let step = json(&circwass(&["fuzz", "--solver", "step", "--cases", "100"]));
    assert!(step["solvers"][0]["max_gap"].as_f64().unwrap() < 1e-9);
}

#[test]
fn bench_emits_csv() {
    let out = stdout(&circwass(&[
        "bench", "--sizes", "8,36", "--reps", "3", "--warmup", "1", "--quadratic-max-n", "8",
    ]));
    let mut lines = out.lines();
    assert_eq!(lines.next(), Some("solver,n,mean_us,p95_us"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    // six solvers at N=8, the four closed forms at N=36
    assert_eq!(rows.len(), 10);
    for r in &rows {
        assert_eq!(r.len(), 4);
        let mean: f64 = r[2].parse().unwrap();
        let p95: f64 = r[3].parse().unwrap();
        assert!(mean >= 0.0 && p95 >= 0.0);
    }
    assert!(rows.iter().any(|r| r[0] == "lp_exact" && r[1] == "8"));
    assert!(!rows.iter().any(|r| r[0] == "lp_exact" && r[1] == "36"));
}

#[test]
fn train_toy_single_epoch_history() {
    let dir = tempfile::tempdir().unwrap();
    let hist = dir.path().join("hist");
    let r = json(&circwass(&[
        "train-toy", "--epochs", "1", "--compare", "ce", "--samples", "300", "--n", "12",
        "--history-dir", hist.to_str().unwrap(),
    ]));
    assert_eq!(r["runs"][0]["history"].as_array().unwrap().len(), 1);
    let text = fs::read_to_string(hist.join("ce-seed0.csv")).unwrap();
    let rows = parse_history_csv(&text).unwrap();
    assert_eq!(rows.len(), 1);
    assert_eq!(rows[0].epoch, 0);
}

#[test]
fn train_toy_compares_paired_seeds_deterministically() {
    let args = [
        "train-toy", "--compare", "ce,wass-power2-binomial", "--seeds", "2", "--epochs", "2",
        "--samples", "300", "--n", "12", "--format", "csv",
    ];
    let first = stdout(&circwass(&args));
    assert_eq!(first, stdout(&circwass(&args)));
    let lines: Vec<&str> = first.lines().collect();
    assert_eq!(lines[0], "loss,seed,lr,maad,median_ae,acc_pi8,acc_pi4,train_accuracy");
    // two losses x two seeds, then one mean row per loss
    assert_eq!(lines.len(), 1 + 4 + 2);
    assert!(lines[5].starts_with("ce,mean,"));
    assert!(lines[6].starts_with("wass-power2-binomial,mean,"));
}

#[test]
fn train_toy_adaptive_logs_blend_weights() {
    let out = circwass(&[
        "train-toy", "--adaptive", "--compare", "wass-power2", "--epochs", "6", "--samples", "240",
        "--n", "8", "--blend-rounds", "5", "--blend-schedule", "linear-weight",
    ]);
    let r: Value = serde_json::from_str(&stdout(&out)).unwrap();
    let weights: Vec<f64> = r["runs"][0]["history"]
        .as_array()
        .unwrap()
        .iter()
        .map(|h| h["blend_weight"].as_f64().unwrap())
        .collect();
    assert_eq!(weights, vec![10.0, 7.5, 5.0, 2.5, 0.0, 0.0]);
    let log = String::from_utf8(out.stderr).unwrap();
    assert_eq!(log.lines().filter(|l| l.contains("blend weight")).count(), 6);
}

#[test]
fn train_toy_error_classes() {
    let bad_loss = circwass(&["train-toy", "--compare", "bogus"]);
    assert_eq!(bad_loss.status.code(), Some(1));
    let lr_count = circwass(&["train-toy", "--compare", "ce,ce", "--lr", "1,2,3"]);
    assert_eq!(lr_count.status.code(), Some(1));
    let diverged = circwass(&[
        "train-toy", "--compare", "ce", "--lr", "1e308", "--epochs", "2", "--samples", "200",
        "--n", "8",
    ]);
    assert_eq!(diverged.status.code(), Some(3));
}
