//! Marginal growth charts: one quantile-regression spline per τ on a grid,
//! with inversion to percentiles and monotone repair of crossing curves.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort_io::{Cohort, MeasurementKind};
use crate::qr_solver::{self, SolverError};
use crate::scalar::Scalar;
use crate::splines::{KnotVector, SplineError};

/// Percentile grid used when none is configured. Brackets the 3rd, 25th,
/// 43rd, 90th and 97th percentiles.
pub const DEFAULT_TAUS: [f64; 9] = [0.03, 0.05, 0.10, 0.25, 0.50, 0.75, 0.90, 0.95, 0.97];

/// Largest share of out-of-domain observations tolerated by [`fit_marginal`].
pub const MAX_SKIPPED_SHARE: f64 = 0.10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ChartError {
    #[error("tau grid must be nonempty, strictly increasing and inside (0, 1)")]
    InvalidTaus,
    #[error("coefficient rows do not match the tau grid or basis dimension")]
    ShapeMismatch,
    #[error("insufficient data: {available} observations for {needed} basis functions")]
    InsufficientData { available: usize, needed: usize },
    #[error("{skipped} of {total} observations lie outside the age domain (more than 10%)")]
    TooManyOutOfDomain { skipped: usize, total: usize },
    #[error("tau {tau} outside the chart's grid [{lo}, {hi}]")]
    TauOutOfRange { tau: f64, lo: f64, hi: f64 },
    #[error("quantile curves cross at age {age}; repair the chart before computing percentiles")]
    Crossing { age: f64 },
    #[error("age {age} outside the table's age grid")]
    AgeOutOfGrid { age: f64 },
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error("fit at tau {tau}: {source}")]
    Solver { tau: f64, source: SolverError },
}

fn valid_taus<T: Scalar>(taus: &[T]) -> bool {
    !taus.is_empty()
        && taus.iter().all(|&t| t > T::zero() && t < T::one())
        && taus.windows(2).all(|w| w[0] < w[1])
}

fn crossing_tol<T: Scalar>(v: T) -> T {
    T::of(1e-9).max(T::epsilon() * T::of(16.0) * (T::one() + v.abs()))
}

/// Evaluated (or repaired) chart: one row of τ-indexed values per age.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct ChartTable<T> {
    pub ages: Vec<T>,
    pub taus: Vec<T>,
    pub values: Vec<Vec<T>>,
}

impl<T: Scalar> ChartTable<T> {
    fn check(&self) -> Result<(), ChartError> {
        if !valid_taus(&self.taus) {
            return Err(ChartError::InvalidTaus);
        }
        if self.values.len() != self.ages.len() || self.values.iter().any(|r| r.len() != self.taus.len()) {
            return Err(ChartError::ShapeMismatch);
        }
        Ok(())
    }

    /// Curve values at `t`, linearly interpolated between grid ages.
    pub fn values_at(&self, t: T) -> Result<Vec<T>, ChartError> {
        let n = self.ages.len();
        let out = ChartError::AgeOutOfGrid { age: t.as_f64() };
        if n == 0 || t < self.ages[0] || t > self.ages[n - 1] {
            return Err(out);
        }
        let hi = self.ages.partition_point(|&a| a < t);
        if self.ages[hi] == t || hi == 0 {
            return Ok(self.values[hi].clone());
        }
        let (a0, a1) = (self.ages[hi - 1], self.ages[hi]);
        let w = (t - a0) / (a1 - a0);
        Ok(self.values[hi - 1]
            .iter()
            .zip(&self.values[hi])
            .map(|(&v0, &v1)| v0 + w * (v1 - v0))
            .collect())
    }

    /// Grid ages and adjacent τ pairs where values decrease by more than 1e-9.
    pub fn crossings(&self) -> Vec<Crossing<T>> {
        let mut out = Vec::new();
        for (&age, v) in self.ages.iter().zip(&self.values) {
            for i in 0..v.len().saturating_sub(1) {
                if v[i + 1] < v[i] - crossing_tol(v[i]) {
                    out.push(Crossing {
                        age,
                        tau_lo: self.taus[i],
                        tau_hi: self.taus[i + 1],
                    });
                }
            }
        }
        out
    }

    /// Percentile of `value` at age `t` against the table's curves.
    pub fn percentile_of(&self, t: T, value: T) -> Result<PercentileReport, ChartError> {
        let v = self.values_at(t)?;
        percentile_from_values(&self.taus, &v, value, t)
    }
}

/// Quantile curves of one measurement against age for one stratum.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ChartParts<T>", into = "ChartParts<T>")]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct MarginalChart<T> {
    kind: MeasurementKind,
    stratum: String,
    knots: KnotVector<T>,
    taus: Vec<T>,
    coef: Vec<Vec<T>>,
    fitted_n: usize,
    repaired: Option<ChartTable<T>>,
}

/// Serialized layout of a chart.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(bound(
    serialize = "T: Scalar + Serialize",
    deserialize = "T: Scalar + Deserialize<'de>"
))]
pub struct ChartParts<T> {
    pub kind: MeasurementKind,
    pub stratum: String,
    pub knots: KnotVector<T>,
    pub taus: Vec<T>,
    pub coef: Vec<Vec<T>>,
    pub fitted_n: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub repaired: Option<ChartTable<T>>,
}

impl<T: Scalar> TryFrom<ChartParts<T>> for MarginalChart<T> {
    type Error = ChartError;

    fn try_from(p: ChartParts<T>) -> Result<Self, ChartError> {
        let chart = MarginalChart::from_parts(p.kind, p.stratum, p.knots, p.taus, p.coef, p.fitted_n)?;
        match p.repaired {
            Some(t) => chart.with_repaired(t),
            None => Ok(chart),
        }
    }
}

impl<T: Scalar> From<MarginalChart<T>> for ChartParts<T> {
    fn from(c: MarginalChart<T>) -> Self {
        ChartParts {
            kind: c.kind,
            stratum: c.stratum,
            knots: c.knots,
            taus: c.taus,
            coef: c.coef,
            fitted_n: c.fitted_n,
            repaired: c.repaired,
        }
    }
}

/// Result of locating a value among the chart's curves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PercentileReport {
    /// Below the lowest curve; carries `100·τ_min`.
    Below(f64),
    /// Above the highest curve; carries `100·τ_max`.
    Above(f64),
    At(f64),
}

impl std::fmt::Display for PercentileReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            PercentileReport::Below(p) => write!(f, "< {p}"),
            PercentileReport::Above(p) => write!(f, "> {p}"),
            PercentileReport::At(p) => write!(f, "{p}"),
        }
    }
}

/// A grid age where the curve for `tau_hi` lies strictly below `tau_lo`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Crossing<T> {
    pub age: T,
    pub tau_lo: T,
    pub tau_hi: T,
}

/// Observation counts behind a fitted chart.
#[derive(Debug, Clone, PartialEq)]
pub struct FitSummary<T> {
    pub used: usize,
    pub skipped_out_of_domain: usize,
    /// Achieved check loss per τ.
    pub losses: Vec<T>,
}

impl<T: Scalar> MarginalChart<T> {
    pub fn from_parts(
        kind: MeasurementKind,
        stratum: String,
        knots: KnotVector<T>,
        taus: Vec<T>,
        coef: Vec<Vec<T>>,
        fitted_n: usize,
    ) -> Result<Self, ChartError> {
        if !valid_taus(&taus) {
            return Err(ChartError::InvalidTaus);
        }
        if coef.len() != taus.len() || coef.iter().any(|r| r.len() != knots.dim()) {
            return Err(ChartError::ShapeMismatch);
        }
        Ok(Self {
            kind,
            stratum,
            knots,
            taus,
            coef,
            fitted_n,
            repaired: None,
        })
    }

    /// Attaches a repaired value table (must share the τ grid).
    pub fn with_repaired(mut self, table: ChartTable<T>) -> Result<Self, ChartError> {
        table.check()?;
        if table.taus != self.taus {
            return Err(ChartError::ShapeMismatch);
        }
        self.repaired = Some(table);
        Ok(self)
    }

    pub fn kind(&self) -> MeasurementKind {
        self.kind
    }

    pub fn stratum(&self) -> &str {
        &self.stratum
    }

    pub fn knots(&self) -> &KnotVector<T> {
        &self.knots
    }

    pub fn taus(&self) -> &[T] {
        &self.taus
    }

    pub fn coef(&self) -> &[Vec<T>] {
        &self.coef
    }

    pub fn fitted_n(&self) -> usize {
        self.fitted_n
    }

    pub fn repaired(&self) -> Option<&ChartTable<T>> {
        self.repaired.as_ref()
    }

    /// Value of every τ curve at `t`, in τ order.
    pub fn curve_values(&self, t: T) -> Result<Vec<T>, ChartError> {
        let (first, b) = self.knots.nonzero_basis(t)?;
        Ok(self
            .coef
            .iter()
            .map(|row| {
                b.iter()
                    .zip(&row[first..])
                    .fold(T::zero(), |a, (&bv, &c)| a + bv * c)
            })
            .collect())
    }

    /// Quantile at `(t, tau)`; linear in τ between grid curves.
    pub fn eval_quantile(&self, t: T, tau: T) -> Result<T, ChartError> {
        let (lo, hi) = (self.taus[0], self.taus[self.taus.len() - 1]);
        if !(tau >= lo && tau <= hi) {
            return Err(ChartError::TauOutOfRange {
                tau: tau.as_f64(),
                lo: lo.as_f64(),
                hi: hi.as_f64(),
            });
        }
        if let Some(r) = self.taus.iter().position(|&g| g == tau) {
            return Ok(self.knots.eval(&self.coef[r], t)?);
        }
        let r = self.taus.partition_point(|&g| g < tau);
        let (t0, t1) = (self.taus[r - 1], self.taus[r]);
        let v0 = self.knots.eval(&self.coef[r - 1], t)?;
        let v1 = self.knots.eval(&self.coef[r], t)?;
        let w = (tau - t0) / (t1 - t0);
        Ok(v0 + w * (v1 - v0))
    }

    /// Locates `value` among the curves at age `t`.
    pub fn percentile_of(&self, t: T, value: T) -> Result<PercentileReport, ChartError> {
        let v = self.curve_values(t)?;
        percentile_from_values(&self.taus, &v, value, t)
    }

    /// Every grid age and adjacent τ pair where the higher curve falls below
    /// the lower one by more than 1e-9.
    pub fn detect_crossings(&self, grid: &[T]) -> Result<Vec<Crossing<T>>, ChartError> {
        Ok(self.table(grid)?.crossings())
    }

    /// Curve values on `grid` without any reordering.
    pub fn table(&self, grid: &[T]) -> Result<ChartTable<T>, ChartError> {
        let values = grid
            .iter()
            .map(|&a| self.curve_values(a))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(ChartTable {
            ages: grid.to_vec(),
            taus: self.taus.clone(),
            values,
        })
    }

    /// Monotone rearrangement on `grid`: at each age the τ-indexed values
    /// are the sorted original values.
    pub fn repair_crossings(&self, grid: &[T]) -> Result<ChartTable<T>, ChartError> {
        let mut t = self.table(grid)?;
        for row in &mut t.values {
            row.sort_by(|a, b| a.partial_cmp(b).expect("finite curve values"));
        }
        Ok(t)
    }
}

fn percentile_from_values<T: Scalar>(
    taus: &[T],
    v: &[T],
    value: T,
    t: T,
) -> Result<PercentileReport, ChartError> {
    if v.windows(2).any(|w| w[1] < w[0] - crossing_tol(w[0])) {
        return Err(ChartError::Crossing { age: t.as_f64() });
    }
    let pct = |tau: T| 100.0 * tau.as_f64();
    let last = v.len() - 1;
    if value < v[0] {
        return Ok(PercentileReport::Below(pct(taus[0])));
    }
    if value > v[last] {
        return Ok(PercentileReport::Above(pct(taus[last])));
    }
    // first curve at or above the value
    let r = v.iter().position(|&c| c >= value).unwrap_or(last);
    if v[r] == value || r == 0 {
        return Ok(PercentileReport::At(pct(taus[r])));
    }
    let (v0, v1) = (v[r - 1], v[r]);
    let w = (value - v0) / (v1 - v0);
    let tau = taus[r - 1] + w * (taus[r] - taus[r - 1]);
    Ok(PercentileReport::At(pct(tau)))
}

/// Fits one quantile curve per τ to the stratum's measurements of `kind`.
///
/// Observations outside the knot domain are skipped; more than 10% skipped
/// is an error.
pub fn fit_marginal<T: Scalar>(
    cohort: &Cohort,
    kind: MeasurementKind,
    stratum: &str,
    knots: &KnotVector<T>,
    taus: &[T],
) -> Result<(MarginalChart<T>, FitSummary<T>), ChartError> {
    if !valid_taus(taus) {
        return Err(ChartError::InvalidTaus);
    }
    let mut ages = Vec::new();
    let mut values = Vec::new();
    let mut total = 0;
    for m in cohort.measurements().filter(|m| m.stratum == stratum) {
        let Some(v) = m.value(kind) else { continue };
        total += 1;
        let age = T::of(m.age);
        if knots.contains(age) {
            ages.push(age);
            values.push(T::of(v));
        }
    }
    let skipped = total - ages.len();
    if skipped as f64 > MAX_SKIPPED_SHARE * total as f64 {
        return Err(ChartError::TooManyOutOfDomain { skipped, total });
    }
    if ages.len() < knots.dim() {
        return Err(ChartError::InsufficientData {
            available: ages.len(),
            needed: knots.dim(),
        });
    }
    let x = knots.design_matrix(&ages)?;
    let fits = taus
        .par_iter()
        .map(|&tau| {
            qr_solver::fit(&x, &values, tau).map_err(|source| ChartError::Solver {
                tau: tau.as_f64(),
                source,
            })
        })
        .collect::<Result<Vec<_>, _>>()?;
    let losses = fits.iter().map(|f| f.loss).collect();
    let coef = fits.into_iter().map(|f| f.coefficients).collect();
    let chart = MarginalChart::from_parts(kind, stratum.to_string(), knots.clone(), taus.to_vec(), coef, ages.len())?;
    Ok((
        chart,
        FitSummary {
            used: ages.len(),
            skipped_out_of_domain: skipped,
            losses,
        },
    ))
}
