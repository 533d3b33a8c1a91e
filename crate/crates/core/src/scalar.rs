use std::fmt::{Debug, Display};
use std::iter::Sum;

use num_traits::{Float, FromPrimitive, ToPrimitive};

/// Floating point scalar used by the numeric kernels (spline evaluation,
/// the quantile-regression solver and chart evaluation).
///
/// Implemented for `f32` and `f64`. Tolerances scale with the precision of
/// the type so the same algorithms run unchanged on both.
pub trait Scalar:
    Float + FromPrimitive + ToPrimitive + Debug + Display + Default + Sum + Send + Sync + 'static
{
    /// Relative tolerance for rank decisions in column-pivoted QR.
    fn rank_tol() -> Self;

    /// Relative tolerance under which a residual counts as zero.
    fn zero_tol() -> Self;

    /// Lossy cast from `f64`; every value that fits the target range converts.
    fn of(x: f64) -> Self {
        Self::from_f64(x).expect("f64 value representable in scalar type")
    }

    fn as_f64(self) -> f64 {
        self.to_f64().unwrap_or(f64::NAN)
    }
}

impl Scalar for f64 {
    fn rank_tol() -> Self {
        1e-10
    }

    fn zero_tol() -> Self {
        1e-11
    }
}

impl Scalar for f32 {
    fn rank_tol() -> Self {
        1e-5
    }

    fn zero_tol() -> Self {
        2e-5
    }
}
