//! Conditional ("global") growth model: the τ-quantile of current weight
//! given age, the subject's own prior weights and current height, plus
//! two-threshold screening.
//!
//! Model form:
//! `Q(W_j | past) = Σ β_k B_k(t_j) + Σ_l γ_l(t_j)·W_{j−l} + covariates`,
//! where each lag coefficient `γ_l` is a constant or, with
//! `time_varying_lag`, an expansion in the same age basis.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort_io::Cohort;
use crate::matrix::{dot, Matrix};
use crate::qr_solver::{self, check_full_rank, SolverError};
use crate::splines::{KnotVector, SplineError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    HeightLinear,
    HeightSquared,
    AgeGap,
}

impl Covariate {
    pub fn name(self) -> &'static str {
        match self {
            Covariate::HeightLinear => "height_linear",
            Covariate::HeightSquared => "height_squared",
            Covariate::AgeGap => "age_gap",
        }
    }

    fn needs_height(self) -> bool {
        matches!(self, Covariate::HeightLinear | Covariate::HeightSquared)
    }
}

impl std::str::FromStr for Covariate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "height_linear" => Ok(Covariate::HeightLinear),
            "height_squared" => Ok(Covariate::HeightSquared),
            "age_gap" => Ok(Covariate::AgeGap),
            other => Err(format!("unknown covariate `{other}`")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConditionalModelSpec {
    pub tau: f64,
    #[serde(default = "one")]
    pub n_lags: usize,
    #[serde(default = "default_covariates")]
    pub covariates: Vec<Covariate>,
    #[serde(default)]
    pub time_varying_lag: bool,
}

fn one() -> usize {
    1
}

fn default_covariates() -> Vec<Covariate> {
    vec![Covariate::HeightLinear]
}

impl ConditionalModelSpec {
    /// One lag, linear height, constant lag coefficient.
    pub fn new(tau: f64) -> Self {
        Self {
            tau,
            n_lags: 1,
            covariates: default_covariates(),
            time_varying_lag: false,
        }
    }

    pub fn validate(&self) -> Result<(), ConditionalError> {
        if !(self.tau > 0.0 && self.tau < 1.0) {
            return Err(ConditionalError::InvalidSpec(format!("tau {} outside (0, 1)", self.tau)));
        }
        if self.n_lags == 0 {
            return Err(ConditionalError::InvalidSpec("n_lags must be at least 1".into()));
        }
        for (i, c) in self.covariates.iter().enumerate() {
            if self.covariates[..i].contains(c) {
                return Err(ConditionalError::InvalidSpec(format!(
                    "covariate {} listed twice",
                    c.name()
                )));
            }
        }
        Ok(())
    }

    fn needs_height(&self) -> bool {
        self.covariates.iter().any(|c| c.needs_height())
    }

    fn lag_width(&self, dim: usize) -> usize {
        if self.time_varying_lag {
            dim
        } else {
            1
        }
    }

    /// Number of coefficients for a basis of dimension `dim`.
    pub fn n_coefficients(&self, dim: usize) -> usize {
        dim + self.n_lags * self.lag_width(dim) + self.covariates.len()
    }

    /// Name of the block owning design column `col`.
    pub fn block_name(&self, dim: usize, col: usize) -> String {
        if col < dim {
            return "age basis".into();
        }
        let w = self.lag_width(dim);
        let c = col - dim;
        if c < self.n_lags * w {
            return format!("lag {}", c / w + 1);
        }
        self.covariates
            .get(c - self.n_lags * w)
            .map_or_else(|| "unknown".into(), |v| v.name().into())
    }

    /// `true` when the specs agree on everything except τ.
    pub fn same_form(&self, other: &Self) -> bool {
        self.n_lags == other.n_lags
            && self.covariates == other.covariates
            && self.time_varying_lag == other.time_varying_lag
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConditionalError {
    #[error("invalid model spec: {0}")]
    InvalidSpec(String),
    #[error("no eligible rows: no visit has enough prior weights inside the age domain")]
    NoEligibleRows,
    #[error("subject {subject} lacks a height at age {age}, required by the height covariate")]
    MissingHeight { subject: String, age: f64 },
    #[error("height required by the model's covariates")]
    HeightRequired,
    #[error("{rows} design rows for {cols} columns; at least {needed} required")]
    TooFewRows { rows: usize, cols: usize, needed: usize },
    #[error("design is rank deficient ({rank} of {cols}); offending block: {block}")]
    RankDeficient { rank: usize, cols: usize, block: String },
    #[error("prior path has {got} visits, model uses {expected}")]
    PathLength { expected: usize, got: usize },
    #[error("prior path ages must increase strictly and precede the visit age")]
    PathOrder,
    #[error("coefficient vector has length {got}, expected {expected}")]
    CoefficientLength { expected: usize, got: usize },
    #[error("no model at tau {0}")]
    MissingModel(f64),
    #[error("screening models differ in more than tau")]
    SpecMismatch,
    #[error("screening thresholds must be increasing probabilities")]
    InvalidThresholds,
    #[error(transparent)]
    Spline(#[from] SplineError),
    #[error(transparent)]
    Solver(#[from] SolverError),
}

/// Origin of a design row.
#[derive(Debug, Clone, PartialEq)]
pub struct RowSource {
    pub subject: String,
    /// Index into the subject's visit list.
    pub visit: usize,
    pub age: f64,
}

#[derive(Debug, Clone)]
pub struct ConditionalDesign {
    pub x: Matrix<f64>,
    pub y: Vec<f64>,
    pub rows: Vec<RowSource>,
}

fn design_row(
    spec: &ConditionalModelSpec,
    kv: &KnotVector<f64>,
    t: f64,
    lags: &[f64],
    height: Option<f64>,
    gap: f64,
) -> Result<Vec<f64>, ConditionalError> {
    let basis = kv.basis_at(t)?;
    let mut row = Vec::with_capacity(spec.n_coefficients(kv.dim()));
    row.extend_from_slice(&basis);
    for &w in lags {
        if spec.time_varying_lag {
            row.extend(basis.iter().map(|b| b * w));
        } else {
            row.push(w);
        }
    }
    for c in &spec.covariates {
        row.push(match c {
            Covariate::HeightLinear => height.ok_or(ConditionalError::HeightRequired)?,
            Covariate::HeightSquared => height.ok_or(ConditionalError::HeightRequired)?.powi(2),
            Covariate::AgeGap => gap,
        });
    }
    Ok(row)
}

/// Regression rows for every visit with at least `n_lags` earlier weighed
/// visits and an age inside the basis domain. Visits without a weight are
/// ignored.
pub fn build_conditional_design(
    cohort: &Cohort,
    spec: &ConditionalModelSpec,
    kv: &KnotVector<f64>,
) -> Result<ConditionalDesign, ConditionalError> {
    spec.validate()?;
    let cols = spec.n_coefficients(kv.dim());
    let mut data = Vec::new();
    let mut y = Vec::new();
    let mut rows = Vec::new();
    for (id, visits) in cohort.subjects() {
        let weighed: Vec<(usize, &_)> = visits.iter().enumerate().filter(|(_, m)| m.weight.is_some()).collect();
        for j in spec.n_lags..weighed.len() {
            let (visit, m) = weighed[j];
            if !kv.contains(m.age) {
                continue;
            }
            if spec.needs_height() && m.height.is_none() {
                return Err(ConditionalError::MissingHeight {
                    subject: id.to_string(),
                    age: m.age,
                });
            }
            let lags: Vec<f64> = (1..=spec.n_lags).map(|l| weighed[j - l].1.weight.unwrap()).collect();
            let gap = m.age - weighed[j - 1].1.age;
            data.extend(design_row(spec, kv, m.age, &lags, m.height, gap)?);
            y.push(m.weight.unwrap());
            rows.push(RowSource {
                subject: id.to_string(),
                visit,
                age: m.age,
            });
        }
    }
    if y.is_empty() {
        return Err(ConditionalError::NoEligibleRows);
    }
    Ok(ConditionalDesign {
        x: Matrix::from_vec(y.len(), cols, data),
        y,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "ModelParts", into = "ModelParts")]
pub struct ConditionalModel {
    spec: ConditionalModelSpec,
    knots: KnotVector<f64>,
    coefficients: Vec<f64>,
    training_rows: usize,
}

#[derive(Serialize, Deserialize)]
struct ModelParts {
    spec: ConditionalModelSpec,
    knots: KnotVector<f64>,
    coefficients: Vec<f64>,
    training_rows: usize,
}

impl TryFrom<ModelParts> for ConditionalModel {
    type Error = ConditionalError;

    fn try_from(p: ModelParts) -> Result<Self, ConditionalError> {
        ConditionalModel::from_parts(p.spec, p.knots, p.coefficients, p.training_rows)
    }
}

impl From<ConditionalModel> for ModelParts {
    fn from(m: ConditionalModel) -> Self {
        ModelParts {
            spec: m.spec,
            knots: m.knots,
            coefficients: m.coefficients,
            training_rows: m.training_rows,
        }
    }
}

impl ConditionalModel {
    pub fn from_parts(
        spec: ConditionalModelSpec,
        knots: KnotVector<f64>,
        coefficients: Vec<f64>,
        training_rows: usize,
    ) -> Result<Self, ConditionalError> {
        spec.validate()?;
        let expected = spec.n_coefficients(knots.dim());
        if coefficients.len() != expected {
            return Err(ConditionalError::CoefficientLength {
                expected,
                got: coefficients.len(),
            });
        }
        Ok(Self {
            spec,
            knots,
            coefficients,
            training_rows,
        })
    }

    pub fn spec(&self) -> &ConditionalModelSpec {
        &self.spec
    }

    pub fn knots(&self) -> &KnotVector<f64> {
        &self.knots
    }

    pub fn coefficients(&self) -> &[f64] {
        &self.coefficients
    }

    pub fn training_rows(&self) -> usize {
        self.training_rows
    }

    /// Lag coefficient `l` (1-based) at age `t`.
    pub fn lag_coefficient(&self, l: usize, t: f64) -> Result<f64, ConditionalError> {
        if l == 0 || l > self.spec.n_lags {
            return Err(ConditionalError::PathLength {
                expected: self.spec.n_lags,
                got: l,
            });
        }
        let dim = self.knots.dim();
        let w = self.spec.lag_width(dim);
        let block = &self.coefficients[dim + (l - 1) * w..dim + l * w];
        if self.spec.time_varying_lag {
            Ok(self.knots.eval(block, t)?)
        } else {
            Ok(block[0])
        }
    }

    /// Linear predictor for each row of a design built with this model's spec.
    pub fn fitted_values(&self, x: &Matrix<f64>) -> Vec<f64> {
        x.mul_vec(&self.coefficients)
    }
}

/// Fit tuning: minimum design rows per column.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConditionalFitOptions {
    pub min_rows_per_column: usize,
}

impl Default for ConditionalFitOptions {
    fn default() -> Self {
        Self { min_rows_per_column: 10 }
    }
}

pub fn fit_conditional(
    cohort: &Cohort,
    spec: &ConditionalModelSpec,
    kv: &KnotVector<f64>,
) -> Result<ConditionalModel, ConditionalError> {
    fit_conditional_with(cohort, spec, kv, &ConditionalFitOptions::default())
}

pub fn fit_conditional_with(
    cohort: &Cohort,
    spec: &ConditionalModelSpec,
    kv: &KnotVector<f64>,
    opts: &ConditionalFitOptions,
) -> Result<ConditionalModel, ConditionalError> {
    let design = build_conditional_design(cohort, spec, kv)?;
    let (rows, cols) = (design.x.nrows(), design.x.ncols());
    let needed = opts.min_rows_per_column * cols;
    if rows < needed {
        return Err(ConditionalError::TooFewRows { rows, cols, needed });
    }
    if let Err(SolverError::RankDeficient { rank, cols, .. }) = check_full_rank(&design.x) {
        return Err(ConditionalError::RankDeficient {
            rank,
            cols,
            block: spec.block_name(kv.dim(), first_dependent_column(&design.x)),
        });
    }
    let fit = qr_solver::fit(&design.x, &design.y, spec.tau)?;
    ConditionalModel::from_parts(spec.clone(), kv.clone(), fit.coefficients, rows)
}

/// Smallest `j` such that columns `0..=j` are linearly dependent.
fn first_dependent_column(x: &Matrix<f64>) -> usize {
    let n = x.nrows();
    (1..=x.ncols())
        .find(|&k| {
            let data = x.rows().flat_map(|r| r[..k].iter().copied()).collect();
            check_full_rank(&Matrix::from_vec(n, k, data)).is_err()
        })
        .map_or(x.ncols() - 1, |k| k - 1)
}

/// Predicted τ-quantile of weight at age `t` given `prior_path`, the
/// `(age, weight)` pairs of the previous visits in chronological order (the
/// last entry is the most recent). The path may be counterfactual.
pub fn predict_conditional(
    model: &ConditionalModel,
    t: f64,
    prior_path: &[(f64, f64)],
    height: Option<f64>,
) -> Result<f64, ConditionalError> {
    let n = model.spec.n_lags;
    if prior_path.len() != n {
        return Err(ConditionalError::PathLength {
            expected: n,
            got: prior_path.len(),
        });
    }
    if prior_path.windows(2).any(|w| w[0].0 >= w[1].0) || prior_path[n - 1].0 >= t {
        return Err(ConditionalError::PathOrder);
    }
    let lags: Vec<f64> = prior_path.iter().rev().map(|p| p.1).collect();
    let row = design_row(&model.spec, &model.knots, t, &lags, height, t - prior_path[n - 1].0)?;
    Ok(dot(&row, &model.coefficients))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScreeningLevel {
    None,
    Watch,
    Alert,
}

impl std::fmt::Display for ScreeningLevel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            ScreeningLevel::None => "none",
            ScreeningLevel::Watch => "watch",
            ScreeningLevel::Alert => "alert",
        })
    }
}

/// The τ levels of the watch and alert thresholds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScreeningThresholds {
    pub watch: f64,
    pub alert: f64,
}

impl Default for ScreeningThresholds {
    fn default() -> Self {
        Self { watch: 0.90, alert: 0.97 }
    }
}

impl ScreeningThresholds {
    pub fn validate(&self) -> Result<(), ConditionalError> {
        if self.watch > 0.0 && self.watch < self.alert && self.alert < 1.0 {
            Ok(())
        } else {
            Err(ConditionalError::InvalidThresholds)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScreeningFlag {
    pub level: ScreeningLevel,
    pub observed: f64,
    /// `(τ, predicted quantile)` for the watch then the alert level.
    pub thresholds: Vec<(f64, f64)>,
    /// Set when the alert threshold falls below the watch threshold.
    pub warning: Option<String>,
}

/// A visit to screen: its age, the observed weight, the prior path and the
/// current height.
#[derive(Debug, Clone, PartialEq)]
pub struct ScreeningVisit<'a> {
    pub age: f64,
    pub observed: f64,
    pub prior_path: &'a [(f64, f64)],
    pub height: Option<f64>,
}

fn model_at(models: &[ConditionalModel], tau: f64) -> Result<&ConditionalModel, ConditionalError> {
    models
        .iter()
        .find(|m| (m.spec.tau - tau).abs() <= 1e-12)
        .ok_or(ConditionalError::MissingModel(tau))
}

/// Compares the observed weight with the predicted watch and alert quantiles.
pub fn screen(
    models: &[ConditionalModel],
    thresholds: ScreeningThresholds,
    visit: &ScreeningVisit<'_>,
) -> Result<ScreeningFlag, ConditionalError> {
    thresholds.validate()?;
    let lo = model_at(models, thresholds.watch)?;
    let hi = model_at(models, thresholds.alert)?;
    if !lo.spec.same_form(&hi.spec) {
        return Err(ConditionalError::SpecMismatch);
    }
    let q_lo = predict_conditional(lo, visit.age, visit.prior_path, visit.height)?;
    let q_hi = predict_conditional(hi, visit.age, visit.prior_path, visit.height)?;
    let w = visit.observed;
    let (level, warning) = if q_hi < q_lo {
        let level = if w > q_hi {
            ScreeningLevel::Alert
        } else {
            ScreeningLevel::None
        };
        let msg = format!(
            "threshold at tau {} ({q_hi}) lies below tau {} ({q_lo}); level uses the alert threshold only",
            thresholds.alert, thresholds.watch
        );
        (level, Some(msg))
    } else if w > q_hi {
        (ScreeningLevel::Alert, None)
    } else if w > q_lo {
        (ScreeningLevel::Watch, None)
    } else {
        (ScreeningLevel::None, None)
    };
    Ok(ScreeningFlag {
        level,
        observed: w,
        thresholds: vec![(thresholds.watch, q_lo), (thresholds.alert, q_hi)],
        warning,
    })
}
