//! Clamped B-spline bases over an age interval.
//!
//! Basis values come from the Cox–de Boor triangular recurrence, evaluated
//! only on the `degree + 1` functions that are nonzero at a point. Intervals
//! are half-open `[u_k, u_{k+1})` except the last, which also contains the
//! right boundary so that `basis_at(t_max)` is `(0, …, 0, 1)`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::matrix::Matrix;
use crate::scalar::Scalar;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SplineError {
    #[error("boundary must satisfy t_min < t_max, got ({lo}, {hi})")]
    ReversedBoundary { lo: f64, hi: f64 },
    #[error("interior knots must be strictly increasing (knot {index} = {value})")]
    NonIncreasingKnots { index: usize, value: f64 },
    #[error("interior knot {index} = {value} is not strictly inside ({lo}, {hi})")]
    KnotOutsideBoundary {
        index: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("non-finite knot value")]
    NonFinite,
    #[error("age {t} outside spline domain [{lo}, {hi}]")]
    OutOfDomain { t: f64, lo: f64, hi: f64 },
    #[error("row {row}: age {t} outside spline domain [{lo}, {hi}]")]
    RowOutOfDomain { row: usize, t: f64, lo: f64, hi: f64 },
}

/// Serialized form of a knot vector: only the defining fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KnotSpec<T> {
    pub degree: usize,
    pub boundary: (T, T),
    pub interior: Vec<T>,
}

/// Degree plus clamped knot sequence. Each boundary knot is repeated
/// `degree + 1` times in `full_knots`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "KnotSpec<T>", into = "KnotSpec<T>")]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct KnotVector<T> {
    degree: usize,
    boundary: (T, T),
    interior: Vec<T>,
    full_knots: Vec<T>,
}

impl<T: Scalar> TryFrom<KnotSpec<T>> for KnotVector<T> {
    type Error = SplineError;

    fn try_from(spec: KnotSpec<T>) -> Result<Self, SplineError> {
        KnotVector::new(spec.degree, spec.boundary, &spec.interior)
    }
}

impl<T: Scalar> From<KnotVector<T>> for KnotSpec<T> {
    fn from(kv: KnotVector<T>) -> Self {
        KnotSpec {
            degree: kv.degree,
            boundary: kv.boundary,
            interior: kv.interior,
        }
    }
}

impl<T: Scalar> KnotVector<T> {
    /// Validates the inputs and builds the clamped sequence.
    pub fn new(degree: usize, boundary: (T, T), interior: &[T]) -> Result<Self, SplineError> {
        let (lo, hi) = boundary;
        if !lo.is_finite() || !hi.is_finite() || interior.iter().any(|k| !k.is_finite()) {
            return Err(SplineError::NonFinite);
        }
        if lo >= hi {
            return Err(SplineError::ReversedBoundary {
                lo: lo.as_f64(),
                hi: hi.as_f64(),
            });
        }
        for (index, &k) in interior.iter().enumerate() {
            if index > 0 && k <= interior[index - 1] {
                return Err(SplineError::NonIncreasingKnots {
                    index,
                    value: k.as_f64(),
                });
            }
            if k <= lo || k >= hi {
                return Err(SplineError::KnotOutsideBoundary {
                    index,
                    value: k.as_f64(),
                    lo: lo.as_f64(),
                    hi: hi.as_f64(),
                });
            }
        }
        let mut full_knots = Vec::with_capacity(interior.len() + 2 * (degree + 1));
        full_knots.extend(std::iter::repeat_n(lo, degree + 1));
        full_knots.extend_from_slice(interior);
        full_knots.extend(std::iter::repeat_n(hi, degree + 1));
        Ok(Self {
            degree,
            boundary,
            interior: interior.to_vec(),
            full_knots,
        })
    }

    /// Cubic basis on ages 0–2 years with interior knots at 0.25, 0.5, 1 and 1.5.
    pub fn infancy_default() -> Self {
        let interior = [0.25, 0.5, 1.0, 1.5].map(T::of);
        Self::new(3, (T::zero(), T::of(2.0)), &interior).expect("valid default knots")
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn boundary(&self) -> (T, T) {
        self.boundary
    }

    pub fn interior(&self) -> &[T] {
        &self.interior
    }

    pub fn full_knots(&self) -> &[T] {
        &self.full_knots
    }

    /// Number of basis functions.
    pub fn dim(&self) -> usize {
        self.interior.len() + self.degree + 1
    }

    pub fn contains(&self, t: T) -> bool {
        t >= self.boundary.0 && t <= self.boundary.1
    }

    fn check_domain(&self, t: T) -> Result<(), SplineError> {
        if self.contains(t) {
            Ok(())
        } else {
            Err(SplineError::OutOfDomain {
                t: t.as_f64(),
                lo: self.boundary.0.as_f64(),
                hi: self.boundary.1.as_f64(),
            })
        }
    }

    /// Index `s` of the knot span `[u_s, u_{s+1})` holding `t`.
    fn span(&self, t: T) -> usize {
        let n = self.dim();
        let u = &self.full_knots;
        if t >= u[n] {
            return n - 1;
        }
        // u[degree] <= t < u[n]; binary search over that range.
        let (mut lo, mut hi) = (self.degree, n);
        while hi - lo > 1 {
            let mid = (lo + hi) / 2;
            if t < u[mid] {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        lo
    }

    /// The `degree + 1` possibly-nonzero basis values at `t`, together with
    /// the index of the first one.
    pub fn nonzero_basis(&self, t: T) -> Result<(usize, Vec<T>), SplineError> {
        self.check_domain(t)?;
        let p = self.degree;
        let s = self.span(t);
        let u = &self.full_knots;
        let mut values = vec![T::zero(); p + 1];
        let mut left = vec![T::zero(); p + 1];
        let mut right = vec![T::zero(); p + 1];
        values[0] = T::one();
        for j in 1..=p {
            left[j] = t - u[s + 1 - j];
            right[j] = u[s + j] - t;
            let mut saved = T::zero();
            for r in 0..j {
                let temp = values[r] / (right[r + 1] + left[j - r]);
                values[r] = saved + right[r + 1] * temp;
                saved = left[j - r] * temp;
            }
            values[j] = saved;
        }
        Ok((s - p, values))
    }

    /// Full basis vector at `t` (length [`dim`](Self::dim)). Never extrapolates.
    pub fn basis_at(&self, t: T) -> Result<Vec<T>, SplineError> {
        let (first, values) = self.nonzero_basis(t)?;
        let mut out = vec![T::zero(); self.dim()];
        out[first..first + values.len()].copy_from_slice(&values);
        Ok(out)
    }

    /// Evaluates `Σ_k coef_k B_k(t)`.
    pub fn eval(&self, coef: &[T], t: T) -> Result<T, SplineError> {
        assert_eq!(coef.len(), self.dim(), "coefficient length must equal basis dimension");
        let (first, values) = self.nonzero_basis(t)?;
        Ok(values
            .iter()
            .zip(&coef[first..])
            .fold(T::zero(), |acc, (&b, &c)| acc + b * c))
    }

    /// One basis row per age.
    pub fn design_matrix(&self, ages: &[T]) -> Result<Matrix<T>, SplineError> {
        let mut m = Matrix::zeros(ages.len(), self.dim());
        for (row, &t) in ages.iter().enumerate() {
            let (first, values) = self.nonzero_basis(t).map_err(|_| SplineError::RowOutOfDomain {
                row,
                t: t.as_f64(),
                lo: self.boundary.0.as_f64(),
                hi: self.boundary.1.as_f64(),
            })?;
            m.row_mut(row)[first..first + values.len()].copy_from_slice(&values);
        }
        Ok(m)
    }
}
