//! Wasserstein distances between probability histograms on a circle.
//!
//! Histograms live on `N` evenly spaced angular bins. The ground cost between
//! two bins is an increasing function of their arc length (linear, power,
//! Huber, chord or step), and the crate provides:
//!
//! - fast exact solvers for one-hot targets, the arc-length metric, convex
//!   metrics and the step metric ([`circular`]),
//! - an exact network-simplex LP and a Sinkhorn approximation over arbitrary
//!   ground matrices ([`oracle`]),
//! - conservative target labels built from wrapped unimodal-uniform mixtures
//!   ([`labels`]),
//! - a small synthetic pose-classification trainer and angular metrics
//!   ([`toy`]),
//! - parsers for the file formats used by the command-line tool ([`io`]).
//!
//! ```
//! use circwass::{circular, GroundMetricSpec, Histogram};
//!
//! let s = Histogram::new(&[0.5, 0.5, 0.0, 0.0], false).unwrap();
//! let t = Histogram::new(&[0.0, 0.0, 0.5, 0.5], false).unwrap();
//! let loss = circular::linear_circular(&s, &t).unwrap();
//! assert!((loss.value - 1.0).abs() < 1e-12);
//!
//! let sq = GroundMetricSpec::power(2.0, 4).unwrap();
//! let conv = circular::convex_circular(&s, &t, &sq, Default::default()).unwrap();
//! assert!((conv.value - 1.0).abs() < 1e-6);
//! ```

pub mod circular;
pub mod error;
pub mod ground_metric;
pub mod histogram;
pub mod io;
pub mod labels;
pub mod oracle;
pub mod toy;

pub use circular::{LossValue, QuantilePrecision, SolverTag, Target};
pub use error::{Error, Result};
pub use ground_metric::{GroundMatrix, GroundMetricSpec, MetricKind};
pub use histogram::{CumulativeDistribution, Histogram};
pub use labels::{ConservativeLabel, SmoothingSpec};
pub use oracle::{LpSolution, SinkhornConfig, TransportPlan};
