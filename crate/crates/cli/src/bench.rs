use std::hint::black_box;
use std::path::PathBuf;
use std::time::Instant;

use circwass::circular::{convex_circular, linear_circular, one_hot_loss, step_l1};
use circwass::ground_metric::ground_matrix;
use circwass::oracle::{lp_exact, sinkhorn_approx, SinkhornConfig};
use circwass::{GroundMetricSpec, Histogram, QuantilePrecision};
use clap::{Args, ValueEnum};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::output::{emit, mean_p95, to_json, CliResult, Format};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchSolver {
    All,
    Linear,
    Convex,
    Step,
    OneHot,
    Sinkhorn,
    Lp,
}

impl BenchSolver {
    fn name(self) -> &'static str {
        match self {
            Self::All => "all",
            Self::Linear => "linear_circular",
            Self::Convex => "convex_circular",
            Self::Step => "step_l1",
            Self::OneHot => "one_hot",
            Self::Sinkhorn => "sinkhorn",
            Self::Lp => "lp_exact",
        }
    }

    fn quadratic(self) -> bool {
        matches!(self, Self::Sinkhorn | Self::Lp)
    }
}

const ALL: [BenchSolver; 6] = [
    BenchSolver::Linear,
    BenchSolver::Convex,
    BenchSolver::Step,
    BenchSolver::OneHot,
    BenchSolver::Sinkhorn,
    BenchSolver::Lp,
];

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[arg(long, value_enum, default_value = "all")]
    pub solver: BenchSolver,
    #[arg(long, value_delimiter = ',', default_value = "8,36,90,360,3600")]
    pub sizes: Vec<usize>,
    /// Timed repetitions per (solver, N); at least 30 are recommended.
    #[arg(long, default_value_t = 30)]
    pub reps: usize,
    /// Untimed repetitions run first.
    #[arg(long, default_value_t = 3)]
    pub warmup: usize,
    /// Largest N for the solvers that build an N x N ground matrix.
    #[arg(long, default_value_t = 360)]
    pub quadratic_max_n: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value = "csv")]
    pub format: Format,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Serialize)]
struct BenchRow {
    solver: &'static str,
    n: usize,
    mean_us: f64,
    p95_us: f64,
}

/// Strictly positive random histogram, so Sinkhorn converges at defaults.
fn dense_hist(rng: &mut ChaCha8Rng, n: usize) -> Histogram {
    let v: Vec<f64> = (0..n).map(|_| rng.gen_range(0.1..1.0)).collect();
    Histogram::new(&v, true).expect("positive total")
}

fn time_solver(args: &BenchArgs, solver: BenchSolver, n: usize) -> circwass::Result<BenchRow> {
    let mut rng = ChaCha8Rng::seed_from_u64(args.seed ^ n as u64);
    let s = dense_hist(&mut rng, n);
    let t = dense_hist(&mut rng, n);
    let j = rng.gen_range(0..n);
    let power = GroundMetricSpec::power(2.0, n)?;
    let prec = QuantilePrecision::default();
    let matrix = solver.quadratic().then(|| ground_matrix(&power));
    let cfg = SinkhornConfig::default();
    let call = || -> circwass::Result<f64> {
        Ok(match solver {
            BenchSolver::Linear => linear_circular(&s, &t)?.value,
            BenchSolver::Convex => convex_circular(&s, &t, &power, prec)?.value,
            BenchSolver::Step => step_l1(&s, &t)?.value,
            BenchSolver::OneHot => one_hot_loss(&s, j, &power)?.value,
            BenchSolver::Sinkhorn => sinkhorn_approx(&s, &t, matrix.as_ref().expect("built"), &cfg)?.cost,
            BenchSolver::Lp => lp_exact(&s, &t, matrix.as_ref().expect("built"))?.cost,
            BenchSolver::All => unreachable!("expanded by the caller"),
        })
    };
    for _ in 0..args.warmup {
        black_box(call()?);
    }
    let mut micros = Vec::with_capacity(args.reps);
    for _ in 0..args.reps {
        let start = Instant::now();
        black_box(call()?);
        micros.push(start.elapsed().as_secs_f64() * 1e6);
    }
    let (mean_us, p95_us) = mean_p95(&micros);
    Ok(BenchRow {
        solver: solver.name(),
        n,
        mean_us,
        p95_us,
    })
}

pub fn run(args: &BenchArgs) -> CliResult<()> {
    if args.reps == 0 {
        return Err(circwass::Error::BadParameter("--reps must be at least 1".into()).into());
    }
    let solvers: Vec<BenchSolver> = match args.solver {
        BenchSolver::All => ALL.to_vec(),
        s => vec![s],
    };
    // timings run sequentially so solvers do not compete for cores
    let mut rows = Vec::new();
    for &solver in &solvers {
        for &n in &args.sizes {
            if solver.quadratic() && n > args.quadratic_max_n {
                eprintln!("skipping {} at N={n} (above --quadratic-max-n)", solver.name());
                continue;
            }
            rows.push(time_solver(args, solver, n)?);
        }
    }
    let text = match args.format {
        Format::Json => to_json(&rows),
        Format::Csv => {
            let mut s = String::from("solver,n,mean_us,p95_us\n");
            for r in &rows {
                s += &format!("{},{},{:.3},{:.3}\n", r.solver, r.n, r.mean_us, r.p95_us);
            }
            s
        }
    };
    emit(args.out.as_deref(), &text)
}
