//! Growth charts from quantile regression.
//!
//! * [`splines`]: clamped B-spline bases over age.
//! * [`qr_solver`]: exact linear-programming quantile regression.
//! * [`charts`]: marginal quantile curves, percentiles and crossing repair.
//! * [`conditional`]: quantiles of weight given the subject's prior path.
//! * [`catchup`]: the catch-up coefficient `b(t)` of the rate-of-change model.
//! * [`reference`]: peer-group empirical percentiles.
//! * [`cohort_io`]: CSV cohorts, model files and the seeded cohort generator.
//! * [`cli`]: the `centile` command line.
//!
//! The numeric kernels are generic over `f32`/`f64` through [`Scalar`];
//! the aliases below fix the double-precision forms used by the data layer.

pub mod catchup;
pub mod charts;
pub mod cli;
pub mod cohort_io;
pub mod conditional;
pub mod matrix;
pub mod qr_solver;
pub mod reference;
pub mod scalar;
pub mod splines;

pub use scalar::Scalar;

pub type KnotVector = splines::KnotVector<f64>;
pub type KnotVector32 = splines::KnotVector<f32>;
pub type Matrix = matrix::Matrix<f64>;
pub type QuantileFit = qr_solver::QuantileFit<f64>;
pub type MarginalChart = charts::MarginalChart<f64>;
pub type MarginalChart32 = charts::MarginalChart<f32>;
pub type ChartTable = charts::ChartTable<f64>;
