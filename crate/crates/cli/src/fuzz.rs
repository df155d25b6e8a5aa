use std::path::PathBuf;

use circwass::circular::{convex_circular, linear_circular, one_hot_loss, step_l1};
use circwass::ground_metric::ground_matrix;
use circwass::oracle::lp_exact;
use circwass::{GroundMetricSpec, Histogram, MetricKind, QuantilePrecision};
use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{emit, to_json, CliError, CliResult, Format};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum FuzzSolver {
    All,
    Linear,
    Step,
    OneHot,
    Convex,
}

const SOLVERS: [FuzzSolver; 4] = [
    FuzzSolver::Linear,
    FuzzSolver::Step,
    FuzzSolver::OneHot,
    FuzzSolver::Convex,
];

#[derive(Debug, Args)]
pub struct FuzzArgs {
    #[arg(long, default_value_t = 500)]
    pub cases: usize,
    #[arg(long, default_value_t = 16)]
    pub max_n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "all")]
    pub solver: FuzzSolver,
    /// Quantization `M` of the convex solver.
    #[arg(long, default_value_t = 1_000_000)]
    pub precision: u64,
    #[arg(long, value_enum, default_value = "json")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
struct CaseResult {
    case: usize,
    solver: FuzzSolver,
    metric: String,
    n: usize,
    gap: f64,
    tolerance: f64,
    s: Vec<f64>,
    t: Vec<f64>,
}

#[derive(Debug, Serialize)]
struct SolverSummary {
    solver: FuzzSolver,
    cases: usize,
    max_gap: f64,
    violations: usize,
}

#[derive(Debug, Serialize)]
struct FuzzReport {
    seed: u64,
    cases: usize,
    max_n: usize,
    solvers: Vec<SolverSummary>,
    violations: Vec<CaseResult>,
}

/// Random unit-mass histogram; about a third of draws are sparse.
fn random_hist(rng: &mut ChaCha8Rng, n: usize) -> Histogram {
    let sparse = rng.gen_bool(0.35);
    let mut v: Vec<f64> = (0..n)
        .map(|_| if sparse && rng.gen_bool(0.5) { 0.0 } else { rng.gen_range(1e-3..1.0) })
        .collect();
    if v.iter().all(|&x| x == 0.0) {
        v[rng.gen_range(0..n)] = 1.0;
    }
    Histogram::new(&v, true).expect("positive total")
}

fn random_kind(rng: &mut ChaCha8Rng, convex_only: bool) -> MetricKind {
    let convex = [
        MetricKind::Power { rho: 2.0 },
        MetricKind::Power { rho: 3.0 },
        MetricKind::Huber { tau: 2.0 },
    ];
    if convex_only {
        return convex[rng.gen_range(0..convex.len())];
    }
    match rng.gen_range(0..5) {
        0 => MetricKind::Linear,
        1 => convex[rng.gen_range(0..convex.len())],
        2 => MetricKind::Huber { tau: rng.gen_range(0.5..4.0) },
        3 => MetricKind::Chord,
        _ => MetricKind::Step,
    }
}

fn run_case(args: &FuzzArgs, case: usize, prec: QuantilePrecision) -> circwass::Result<CaseResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed);
    rng.set_stream(case as u64);
    let solver = match args.solver {
        FuzzSolver::All => SOLVERS[case % SOLVERS.len()],
        s => s,
    };
    let n = rng.gen_range(2..=args.max_n);
    let s = random_hist(&mut rng, n);
    let (spec, t, fast, tolerance) = match solver {
        FuzzSolver::Linear => {
            let t = random_hist(&mut rng, n);
            let v = linear_circular(&s, &t)?.value;
            (GroundMetricSpec::linear(n), t, v, 1e-6)
        }
        FuzzSolver::Step => {
            let t = random_hist(&mut rng, n);
            let v = step_l1(&s, &t)?.value;
            (GroundMetricSpec::step(n), t, v, 1e-9)
        }
        FuzzSolver::OneHot => {
            let spec = GroundMetricSpec::new(random_kind(&mut rng, false), n)?;
            let j = rng.gen_range(0..n);
            let v = one_hot_loss(&s, j, &spec)?.value;
            (spec, Histogram::one_hot(j, n)?, v, 1e-9)
        }
        FuzzSolver::Convex => {
            let spec = GroundMetricSpec::new(random_kind(&mut rng, true), n)?;
            let t = random_hist(&mut rng, n);
            let v = convex_circular(&s, &t, &spec, prec)?.value;
            (spec, t, v, prec.error_bound(&spec))
        }
        FuzzSolver::All => unreachable!("resolved above"),
    };
    let exact = lp_exact(&s, &t, &ground_matrix(&spec))?.cost;
    Ok(CaseResult {
        case,
        solver,
        metric: spec.name().to_string(),
        n,
        gap: (fast - exact).abs(),
        tolerance,
        s: s.values().to_vec(),
        t: t.values().to_vec(),
    })
}

pub fn run(args: &FuzzArgs) -> CliResult<()> {
    if args.max_n < 2 {
        return Err(circwass::Error::TooFewBins(args.max_n).into());
    }
    let prec = QuantilePrecision::new(args.precision)?;
    // results come back in case order regardless of scheduling
    let results = (0..args.cases)
        .into_par_iter()
        .map(|case| run_case(args, case, prec))
        .collect::<circwass::Result<Vec<_>>>()?;

    let active: Vec<FuzzSolver> = match args.solver {
        FuzzSolver::All => SOLVERS.to_vec(),
        s => vec![s],
    };
    let solvers = active
        .iter()
        .map(|&solver| {
            let mine: Vec<&CaseResult> = results.iter().filter(|r| r.solver == solver).collect();
            SolverSummary {
                solver,
                cases: mine.len(),
                max_gap: mine.iter().map(|r| r.gap).fold(0.0, f64::max),
                violations: mine.iter().filter(|r| !(r.gap <= r.tolerance)).count(),
            }
        })
        .collect();
    let violations: Vec<CaseResult> =
        results.into_iter().filter(|r| !(r.gap <= r.tolerance)).collect();
    let report = FuzzReport {
        seed: args.seed,
        cases: args.cases,
        max_n: args.max_n,
        solvers,
        violations,
    };
    let text = match args.format {
        Format::Json => to_json(&report),
        Format::Csv => {
            let mut s = String::from("solver,cases,max_gap,violations\n");
            for r in &report.solvers {
                let name = serde_json::to_value(r.solver).expect("enum serializes");
                s += &format!(
                    "{},{},{:e},{}\n",
                    name.as_str().unwrap_or_default(),
                    r.cases,
                    r.max_gap,
                    r.violations
                );
            }
            s
        }
    };
    emit(args.out.as_deref(), &text)?;
    if report.violations.is_empty() {
        Ok(())
    } else {
        Err(CliError::Violation(format!(
            "{} of {} cases exceed their tolerance",
            report.violations.len(),
            report.cases
        )))
    }
}
