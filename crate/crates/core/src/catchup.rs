//! Catch-up coefficient `b(t)` from the rate-of-change model
//!
//! `(W_j − W_{j−1})/D_j = (g(t_j) − g(t_{j−1}))/D_j + b(t_{j−1})·(W_{j−1} − g(t_{j−1})) + e_j`
//!
//! with `g` the median curve of a marginal chart and `b` expanded in a
//! B-spline basis, fit by median regression. Negative `b` pulls a subject
//! back toward the median (catch-up); positive `b` pushes away.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::charts::{ChartError, MarginalChart};
use crate::cohort_io::{Cohort, Measurement};
use crate::matrix::Matrix;
use crate::qr_solver::{self, SolverError};
use crate::splines::{KnotVector, SplineError};

/// Interquartile range of the standard normal.
pub const NORMAL_IQR: f64 = 1.348_979_500_392_163_5;

/// Default smallest visit gap (years) used in a row.
pub const DEFAULT_MIN_GAP: f64 = 0.01;

/// Default half-width of the "neutral" band in [`eval_b`].
pub const DEFAULT_LABEL_TOL: f64 = 0.01;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CatchupError {
    #[error("subject {subject}: visit ages do not increase ({from} then {to})")]
    NonIncreasingAges { subject: String, from: f64, to: f64 },
    #[error("reference chart lacks the tau {0} curve")]
    MissingCurve(f64),
    #[error("reference chart has non-positive spread at age {0}")]
    ZeroSpread(f64),
    #[error("every visit pair lies on the median curve; nothing to fit")]
    AllZero,
    #[error("{rows} informative rows for {dim} basis functions")]
    InsufficientRows { rows: usize, dim: usize },
    #[error("coefficient vector has length {got}, expected {expected}")]
    CoefficientLength { expected: usize, got: usize },
    #[error(transparent)]
    Chart(#[from] ChartError),
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Visit pair behind a design row.
#[derive(Debug, Clone, PartialEq)]
pub struct PairSource {
    pub subject: String,
    pub from_age: f64,
    pub to_age: f64,
}

#[derive(Debug, Clone, Default)]
pub struct CatchupDesign {
    pub rows: Vec<Vec<f64>>,
    pub response: Vec<f64>,
    pub sources: Vec<PairSource>,
    /// Pairs closer than the minimum gap.
    pub skipped_short_gap: usize,
    /// Pairs whose deviation from the median is exactly zero.
    pub dropped_zero: usize,
}

impl CatchupDesign {
    pub fn matrix(&self, dim: usize) -> Matrix<f64> {
        Matrix::from_vec(self.rows.len(), dim, self.rows.concat())
    }

    fn append(&mut self, other: CatchupDesign) {
        self.rows.extend(other.rows);
        self.response.extend(other.response);
        self.sources.extend(other.sources);
        self.skipped_short_gap += other.skipped_short_gap;
        self.dropped_zero += other.dropped_zero;
    }
}

/// Row construction settings.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CatchupOptions {
    pub use_zscores: bool,
    pub min_gap: f64,
}

impl Default for CatchupOptions {
    fn default() -> Self {
        Self {
            use_zscores: false,
            min_gap: DEFAULT_MIN_GAP,
        }
    }
}

/// Maps `(age, weight)` to the scale the model is fit on.
struct Reference<'a> {
    chart: &'a MarginalChart<f64>,
    zscores: bool,
}

impl<'a> Reference<'a> {
    fn new(chart: &'a MarginalChart<f64>, zscores: bool) -> Result<Self, CatchupError> {
        let need: &[f64] = if zscores { &[0.25, 0.5, 0.75] } else { &[0.5] };
        for &tau in need {
            if !chart.taus().contains(&tau) {
                return Err(CatchupError::MissingCurve(tau));
            }
        }
        Ok(Self { chart, zscores })
    }

    /// `(score, score of the median)` at age `t`.
    fn score(&self, t: f64, w: f64) -> Result<(f64, f64), CatchupError> {
        let med = self.chart.eval_quantile(t, 0.5)?;
        if !self.zscores {
            return Ok((w, med));
        }
        let spread = self.chart.eval_quantile(t, 0.75)? - self.chart.eval_quantile(t, 0.25)?;
        if !(spread > 0.0) {
            return Err(CatchupError::ZeroSpread(t));
        }
        Ok(((w - med) * NORMAL_IQR / spread, 0.0))
    }
}

/// Rows from one subject's visits (in the order given). Visits without a
/// weight are ignored.
pub fn subject_rows(
    subject: &str,
    visits: &[Measurement],
    chart: &MarginalChart<f64>,
    kv_b: &KnotVector<f64>,
    opts: &CatchupOptions,
) -> Result<CatchupDesign, CatchupError> {
    let reference = Reference::new(chart, opts.use_zscores)?;
    subject_rows_with(subject, visits, &reference, kv_b, opts)
}

fn subject_rows_with(
    subject: &str,
    visits: &[Measurement],
    reference: &Reference<'_>,
    kv_b: &KnotVector<f64>,
    opts: &CatchupOptions,
) -> Result<CatchupDesign, CatchupError> {
    let weighed: Vec<(f64, f64)> = visits.iter().filter_map(|m| m.weight.map(|w| (m.age, w))).collect();
    let mut out = CatchupDesign::default();
    for pair in weighed.windows(2) {
        let ((t0, w0), (t1, w1)) = (pair[0], pair[1]);
        let gap = t1 - t0;
        if !(gap > 0.0) {
            return Err(CatchupError::NonIncreasingAges {
                subject: subject.to_string(),
                from: t0,
                to: t1,
            });
        }
        if gap < opts.min_gap {
            out.skipped_short_gap += 1;
            continue;
        }
        let (s0, g0) = reference.score(t0, w0)?;
        let (s1, g1) = reference.score(t1, w1)?;
        let deviation = s0 - g0;
        if deviation == 0.0 {
            out.dropped_zero += 1;
            continue;
        }
        let basis = kv_b.basis_at(t0)?;
        out.rows.push(basis.iter().map(|b| b * deviation).collect());
        out.response.push((s1 - s0) / gap - (g1 - g0) / gap);
        out.sources.push(PairSource {
            subject: subject.to_string(),
            from_age: t0,
            to_age: t1,
        });
    }
    Ok(out)
}

/// Design rows for every consecutive weighed visit pair in the cohort.
pub fn catchup_rows(
    cohort: &Cohort,
    chart: &MarginalChart<f64>,
    kv_b: &KnotVector<f64>,
    opts: &CatchupOptions,
) -> Result<CatchupDesign, CatchupError> {
    let reference = Reference::new(chart, opts.use_zscores)?;
    let mut out = CatchupDesign::default();
    for (id, visits) in cohort.subjects() {
        out.append(subject_rows_with(id, visits, &reference, kv_b, opts)?);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CatchupParts", into = "CatchupParts")]
pub struct CatchupModel {
    knots: KnotVector<f64>,
    coefficients: Vec<f64>,
    use_zscores: bool,
    reference_chart: String,
    residuals: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct CatchupParts {
    knots: KnotVector<f64>,
    coefficients: Vec<f64>,
    use_zscores: bool,
    reference_chart: String,
    residuals: Vec<f64>,
}

impl TryFrom<CatchupParts> for CatchupModel {
    type Error = CatchupError;

    fn try_from(p: CatchupParts) -> Result<Self, CatchupError> {
        CatchupModel::from_parts(p.knots, p.coefficients, p.use_zscores, p.reference_chart, p.residuals)
    }
}

impl From<CatchupModel> for CatchupParts {
    fn from(m: CatchupModel) -> Self {
        CatchupParts {
            knots: m.knots,
            coefficients: m.coefficients,
            use_zscores: m.use_zscores,
            reference_chart: m.reference_chart,
            residuals: m.residuals,
        }
    }
}

impl CatchupModel {
    pub fn from_parts(
        knots: KnotVector<f64>,
        coefficients: Vec<f64>,
        use_zscores: bool,
        reference_chart: String,
        residuals: Vec<f64>,
    ) -> Result<Self, CatchupError> {
        if coefficients.len() != knots.dim() {
            return Err(CatchupError::CoefficientLength {
                expected: knots.dim(),
                got: coefficients.len(),
            });
        }
        Ok(Self {
            knots,
            coefficients,
            use_zscores,
            reference_chart,
            residuals,
        })
    }

    pub fn knots(&self) -> &KnotVector<f64> {
        &self.knots
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn use_zscores(&self) -> bool {
        self.use_zscores
    }

    /// Label of the chart that supplied the median curve.
    pub fn reference_chart(&self) -> &str {
        &self.reference_chart
    }

    /// One residual per visit pair used in the fit.
    pub fn residuals(&self) -> &[f64] {
        &self.residuals
    }
}

/// Fits `b(t)` at τ = 0.5. `reference_chart` labels the chart in the saved model.
pub fn fit_catchup(
    cohort: &Cohort,
    chart: &MarginalChart<f64>,
    reference_chart: &str,
    kv_b: &KnotVector<f64>,
    opts: &CatchupOptions,
) -> Result<CatchupModel, CatchupError> {
    let design = catchup_rows(cohort, chart, kv_b, opts)?;
    let rows = design.rows.len();
    if rows == 0 {
        return Err(CatchupError::AllZero);
    }
    if rows < kv_b.dim() {
        return Err(CatchupError::InsufficientRows { rows, dim: kv_b.dim() });
    }
    let fit = qr_solver::fit(&design.matrix(kv_b.dim()), &design.response, 0.5)?;
    CatchupModel::from_parts(
        kv_b.clone(),
        fit.coefficients,
        opts.use_zscores,
        reference_chart.to_string(),
        fit.residuals,
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    CatchUp,
    CatchDown,
    Neutral,
}

impl std::fmt::Display for Direction {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Direction::CatchUp => "catch-up",
            Direction::CatchDown => "catch-down",
            Direction::Neutral => "neutral",
        })
    }
}

/// `b(t)` and its direction, using the default neutral band.
pub fn eval_b(model: &CatchupModel, t: f64) -> Result<(f64, Direction), CatchupError> {
    eval_b_with(model, t, DEFAULT_LABEL_TOL)
}

pub fn eval_b_with(model: &CatchupModel, t: f64, label_tol: f64) -> Result<(f64, Direction), CatchupError> {
    let b = model.knots.eval(&model.coefficients, t)?;
    let dir = if b.abs() < label_tol {
        Direction::Neutral
    } else if b < 0.0 {
        Direction::CatchUp
    } else {
        Direction::CatchDown
    };
    Ok((b, dir))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cohort_io::{catchup_step, MeasurementKind};

    /// Median 3 + 2t with quartiles ±0.5.
    fn linear_chart() -> MarginalChart<f64> {
        let kv = KnotVector::new(1, (0.0, 2.0), &[]).unwrap();
        MarginalChart::from_parts(
            MeasurementKind::Weight,
            "M".into(),
            kv,
            vec![0.25, 0.5, 0.75],
            vec![vec![2.5, 6.5], vec![3.0, 7.0], vec![3.5, 7.5]],
            0,
        )
        .unwrap()
    }

    fn g(t: f64) -> f64 {
        3.0 + 2.0 * t
    }

    fn m(id: &str, age: f64, w: f64) -> Measurement {
        Measurement {
            subject_id: id.into(),
            stratum: "M".into(),
            age,
            weight: Some(w),
            height: None,
        }
    }

    fn kv_b() -> KnotVector<f64> {
        KnotVector::new(3, (0.0, 2.0), &[]).unwrap()
    }

    #[test]
    fn on_median_rows_are_dropped() {
        let visits: Vec<_> = [0.0, 0.5, 1.0].iter().map(|&t| m("a", t, g(t))).collect();
        let d = subject_rows("a", &visits, &linear_chart(), &kv_b(), &CatchupOptions::default()).unwrap();
        assert!(d.rows.is_empty());
        assert_eq!(d.dropped_zero, 2);
    }

    #[test]
    fn response_equals_b_times_deviation() {
        let b = -0.5;
        let ages = [0.0, 0.1, 0.3, 0.7];
        let mut visits = vec![m("a", 0.0, g(0.0) - 1.0)];
        for w in ages.windows(2) {
            let prev = visits.last().unwrap().weight.unwrap();
            visits.push(m("a", w[1], catchup_step(prev, g(w[0]), g(w[1]), b, w[1] - w[0], 0.0)));
        }
        // hand step: 1 kg below median, D = 0.1
        assert!((visits[1].weight.unwrap() - (g(0.1) - 1.0 + 0.05)).abs() < 1e-12);
        let d = subject_rows("a", &visits, &linear_chart(), &kv_b(), &CatchupOptions::default()).unwrap();
        assert_eq!(d.rows.len(), 3);
        for (k, r) in d.response.iter().enumerate() {
            let dev = visits[k].weight.unwrap() - g(ages[k]);
            assert!((r - b * dev).abs() < 1e-9, "{r} vs {}", b * dev);
        }
    }

    #[test]
    fn equal_ages_are_an_error() {
        let visits = [m("a", 0.5, 6.0), m("a", 0.5, 6.1)];
        assert!(matches!(
            subject_rows("a", &visits, &linear_chart(), &kv_b(), &CatchupOptions::default()),
            Err(CatchupError::NonIncreasingAges { .. })
        ));
    }

    #[test]
    fn short_gaps_are_skipped() {
        let visits = [m("a", 0.5, 6.0), m("a", 0.505, 6.1), m("a", 0.8, 6.5)];
        let d = subject_rows("a", &visits, &linear_chart(), &kv_b(), &CatchupOptions::default()).unwrap();
        assert_eq!(d.skipped_short_gap, 1);
        assert_eq!(d.rows.len(), 1);
    }

    #[test]
    fn zscores_standardize_by_quartiles() {
        let visits = [m("a", 0.5, 4.5), m("a", 1.0, 5.0)];
        let opts = CatchupOptions {
            use_zscores: true,
            ..Default::default()
        };
        let d = subject_rows("a", &visits, &linear_chart(), &kv_b(), &opts).unwrap();
        // half a quartile-spread above the median, then on it
        let z0 = 0.5 * NORMAL_IQR;
        assert!((d.response[0] - (0.0 - z0) / 0.5).abs() < 1e-12);
        let row_sum: f64 = d.rows[0].iter().sum();
        assert!((row_sum - z0).abs() < 1e-12);
        let median_only = MarginalChart::from_parts(
            MeasurementKind::Weight,
            "M".into(),
            KnotVector::new(1, (0.0, 2.0), &[]).unwrap(),
            vec![0.5],
            vec![vec![3.0, 7.0]],
            0,
        )
        .unwrap();
        assert_eq!(
            subject_rows("a", &visits, &median_only, &kv_b(), &opts).unwrap_err(),
            CatchupError::MissingCurve(0.25)
        );
    }

    #[test]
    fn exact_recovery_without_noise() {
        // b in the span of a linear basis: b(t) = −1 + 0.4t
        let kv = KnotVector::new(1, (0.0, 2.0), &[]).unwrap();
        let b = |t: f64| -1.0 + 0.4 * t;
        let mut c = Cohort::new();
        for s in 0..10 {
            let mut t0 = 0.0;
            let mut w = g(0.0) + 0.2 * (s as f64 - 4.5);
            c.insert(m(&format!("s{s}"), t0, w)).unwrap();
            for v in 1..6 {
                let t1 = 0.3 * v as f64 + 0.01 * s as f64;
                w = catchup_step(w, g(t0), g(t1), b(t0), t1 - t0, 0.0);
                c.insert(m(&format!("s{s}"), t1, w)).unwrap();
                t0 = t1;
            }
        }
        let model = fit_catchup(&c, &linear_chart(), "weight/M", &kv, &CatchupOptions::default()).unwrap();
        assert!(model.residuals().iter().all(|r| r.abs() < 1e-9));
        for i in 0..=10 {
            let t = 0.2 * i as f64;
            assert!((eval_b(&model, t).unwrap().0 - b(t)).abs() < 1e-9);
        }
    }

    #[test]
    fn glued_cohort_has_nothing_to_fit() {
        let c: Cohort = [0.0, 0.5, 1.0].iter().map(|&t| m("a", t, g(t))).collect();
        assert_eq!(
            fit_catchup(&c, &linear_chart(), "x", &kv_b(), &CatchupOptions::default()).unwrap_err(),
            CatchupError::AllZero
        );
    }

    #[test]
    fn labels() {
        let zero = CatchupModel::from_parts(kv_b(), vec![0.0; 4], false, "x".into(), vec![]).unwrap();
        assert_eq!(eval_b(&zero, 1.0).unwrap(), (0.0, Direction::Neutral));
        let neg = CatchupModel::from_parts(kv_b(), vec![-0.5; 4], false, "x".into(), vec![]).unwrap();
        for t in [0.0, 0.3, 1.7, 2.0] {
            let (v, d) = eval_b(&neg, t).unwrap();
            assert!((v + 0.5).abs() < 1e-15);
            assert_eq!(d.to_string(), "catch-up");
        }
        // crosses zero at t = 1 on a linear basis
        let lin = CatchupModel::from_parts(
            KnotVector::new(1, (0.0, 2.0), &[]).unwrap(),
            vec![-1.0, 1.0],
            false,
            "x".into(),
            vec![],
        )
        .unwrap();
        assert_eq!(eval_b(&lin, 0.9).unwrap().1, Direction::CatchUp);
        assert_eq!(eval_b(&lin, 1.0).unwrap().1, Direction::Neutral);
        assert_eq!(eval_b(&lin, 1.1).unwrap().1, Direction::CatchDown);
        assert!(eval_b(&lin, 2.5).is_err());
        assert!(CatchupModel::from_parts(kv_b(), vec![0.0; 3], false, "x".into(), vec![]).is_err());
    }
}
