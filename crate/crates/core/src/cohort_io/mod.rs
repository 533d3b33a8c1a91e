//! Cohort data, CSV ingestion, model files and the synthetic cohort generator.

mod csv_format;
mod model_file;
mod simulate;

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

pub use csv_format::{load_cohort, write_cohort, CohortError, SkippedRow, ValidationReport, CSV_HEADER};
pub use model_file::{
    load_catchup, load_conditional, load_marginal, load_model, save_model, ModelFile, ModelIoError,
};
pub use simulate::{
    catchup_step, simulate_cohort, CatchupCoefficient, GeneratorError, GeneratorMode, GeneratorParams,
    HeightModel, Noise, VisitSchedule,
};

/// Which measurement a chart describes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MeasurementKind {
    Weight,
    Height,
}

impl std::fmt::Display for MeasurementKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            MeasurementKind::Weight => "weight",
            MeasurementKind::Height => "height",
        })
    }
}

impl std::str::FromStr for MeasurementKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "weight" => Ok(Self::Weight),
            "height" => Ok(Self::Height),
            other => Err(format!("unknown measurement kind `{other}`")),
        }
    }
}

/// One visit. Age in years, weight in kg, height in cm.
#[derive(Debug, Clone, PartialEq)]
pub struct Measurement {
    pub subject_id: String,
    pub stratum: String,
    pub age: f64,
    pub weight: Option<f64>,
    pub height: Option<f64>,
}

impl Measurement {
    pub fn value(&self, kind: MeasurementKind) -> Option<f64> {
        match kind {
            MeasurementKind::Weight => self.weight,
            MeasurementKind::Height => self.height,
        }
    }
}

/// Subjects keyed by id, each with strictly age-increasing visits.
///
/// Iteration order is by subject id, then age.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Cohort {
    subjects: BTreeMap<String, Vec<Measurement>>,
    strata: BTreeSet<String>,
}

/// Why a measurement was refused by [`Cohort::insert`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum InsertError {
    DuplicateVisit,
    StratumConflict { existing: String },
    NoValues,
    InvalidAge,
    NonPositive,
}

impl std::fmt::Display for InsertError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InsertError::DuplicateVisit => f.write_str("duplicate visit"),
            InsertError::StratumConflict { existing } => {
                write!(f, "stratum conflicts with earlier rows ({existing})")
            }
            InsertError::NoValues => f.write_str("neither weight nor height present"),
            InsertError::InvalidAge => f.write_str("age must be finite and nonnegative"),
            InsertError::NonPositive => f.write_str("weight and height must be positive"),
        }
    }
}

impl Cohort {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds one visit, keeping the subject's visits sorted by age.
    pub fn insert(&mut self, m: Measurement) -> Result<(), InsertError> {
        if !m.age.is_finite() || m.age < 0.0 {
            return Err(InsertError::InvalidAge);
        }
        if m.weight.is_none() && m.height.is_none() {
            return Err(InsertError::NoValues);
        }
        let positive = |v: Option<f64>| v.is_none_or(|x| x.is_finite() && x > 0.0);
        if !positive(m.weight) || !positive(m.height) {
            return Err(InsertError::NonPositive);
        }
        let visits = self.subjects.entry(m.subject_id.clone()).or_default();
        if let Some(first) = visits.first() {
            if first.stratum != m.stratum {
                return Err(InsertError::StratumConflict {
                    existing: first.stratum.clone(),
                });
            }
        }
        match visits.binary_search_by(|v| v.age.total_cmp(&m.age)) {
            Ok(_) => Err(InsertError::DuplicateVisit),
            Err(pos) => {
                self.strata.insert(m.stratum.clone());
                visits.insert(pos, m);
                Ok(())
            }
        }
    }

    pub fn subjects(&self) -> impl Iterator<Item = (&str, &[Measurement])> + '_ {
        self.subjects.iter().map(|(k, v)| (k.as_str(), v.as_slice()))
    }

    pub fn subject(&self, id: &str) -> Option<&[Measurement]> {
        self.subjects.get(id).map(Vec::as_slice)
    }

    pub fn n_subjects(&self) -> usize {
        self.subjects.len()
    }

    pub fn n_measurements(&self) -> usize {
        self.subjects.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.subjects.is_empty()
    }

    pub fn strata(&self) -> &BTreeSet<String> {
        &self.strata
    }

    pub fn measurements(&self) -> impl Iterator<Item = &Measurement> + '_ {
        self.subjects.values().flatten()
    }

    /// Subjects belonging to one stratum.
    pub fn stratum(&self, label: &str) -> Cohort {
        let subjects: BTreeMap<String, Vec<Measurement>> = self
            .subjects
            .iter()
            .filter(|(_, v)| v.first().is_some_and(|m| m.stratum == label))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        let strata = if subjects.is_empty() {
            BTreeSet::new()
        } else {
            BTreeSet::from([label.to_string()])
        };
        Cohort { subjects, strata }
    }
}

impl FromIterator<Measurement> for Cohort {
    /// Collects measurements, silently dropping any that [`Cohort::insert`] refuses.
    fn from_iter<I: IntoIterator<Item = Measurement>>(iter: I) -> Self {
        let mut c = Cohort::new();
        for m in iter {
            let _ = c.insert(m);
        }
        c
    }
}
