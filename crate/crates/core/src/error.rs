use thiserror::Error;

/// Errors produced by every fallible operation in the crate.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("negative mass {value} at bin {index}")]
    NegativeMass { index: usize, value: f64 },
    #[error("non-finite value at bin {0}")]
    NonFinite(usize),
    #[error("histogram has zero total mass")]
    ZeroTotal,
    #[error("histogram needs at least 2 bins, got {0}")]
    TooFewBins(usize),
    #[error("histogram mass {0} is not 1 within tolerance")]
    NotNormalized(f64),
    #[error("quantile level {level} outside (0, {total}]")]
    OutOfRange { level: f64, total: f64 },
    #[error("index {index} out of range for {n} bins")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("bad parameter: {0}")]
    BadParameter(String),
    #[error("class {0} has no samples")]
    MissingClass(usize),
    #[error("feature dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix is not symmetric with zero diagonal at ({0}, {1})")]
    AsymmetricInput(usize, usize),
    #[error("ground metric {0} is not convex")]
    NonConvexSpec(&'static str),
    #[error("marginals are infeasible: {0}")]
    InfeasibleMarginals(String),
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("sinkhorn did not converge: marginal violation {violation:e} after {iters} iterations")]
    NotConverged { violation: f64, iters: usize },
    #[error("training diverged at epoch {0}")]
    DivergedLoss(usize),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;
