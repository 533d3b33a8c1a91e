use std::io::{Read, Write};

use thiserror::Error;

use super::{Cohort, Measurement};

pub const CSV_HEADER: [&str; 5] = ["subject_id", "stratum", "age_years", "weight_kg", "height_cm"];

#[derive(Debug, Error)]
pub enum CohortError {
    #[error("malformed header: {0}")]
    Header(String),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedRow {
    /// 1-based line number in the input (the header is line 1).
    pub line: u64,
    pub reason: String,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub accepted: usize,
    pub skipped: Vec<SkippedRow>,
}

impl std::fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        writeln!(f, "{} rows accepted, {} skipped", self.accepted, self.skipped.len())?;
        for s in &self.skipped {
            writeln!(f, "  line {}: {}", s.line, s.reason)?;
        }
        Ok(())
    }
}

fn parse_optional(field: &str, name: &str) -> Result<Option<f64>, String> {
    let t = field.trim();
    if t.is_empty() {
        return Ok(None);
    }
    t.parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .map(Some)
        .ok_or_else(|| format!("non-numeric {name} `{t}`"))
}

/// Reads a cohort CSV (`subject_id,stratum,age_years,weight_kg,height_cm`).
///
/// Columns may appear in any order. Invalid rows are skipped and listed in
/// the report; only a bad header or unreadable input is an error.
pub fn load_cohort<R: Read>(reader: R) -> Result<(Cohort, ValidationReport), CohortError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let mut idx = [0usize; 5];
    for (slot, name) in idx.iter_mut().zip(CSV_HEADER) {
        *slot = headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| CohortError::Header(format!("missing column `{name}`")))?;
    }
    if headers.len() != CSV_HEADER.len() {
        return Err(CohortError::Header(format!(
            "expected {} columns, found {}",
            CSV_HEADER.len(),
            headers.len()
        )));
    }

    let mut cohort = Cohort::new();
    let mut report = ValidationReport::default();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = rec.position().map_or(k as u64 + 2, |p| p.line());
        let mut skip = |reason: String| report.skipped.push(SkippedRow { line, reason });
        if rec.len() != CSV_HEADER.len() {
            skip(format!("expected {} fields, found {}", CSV_HEADER.len(), rec.len()));
            continue;
        }
        let subject_id = rec[idx[0]].to_string();
        if subject_id.is_empty() {
            skip("empty subject_id".into());
            continue;
        }
        let age = match parse_optional(&rec[idx[2]], "age_years") {
            Ok(Some(a)) => a,
            Ok(None) => {
                skip("missing age_years".into());
                continue;
            }
            Err(e) => {
                skip(e);
                continue;
            }
        };
        let (weight, height) = match (
            parse_optional(&rec[idx[3]], "weight_kg"),
            parse_optional(&rec[idx[4]], "height_cm"),
        ) {
            (Ok(w), Ok(h)) => (w, h),
            (Err(e), _) | (_, Err(e)) => {
                skip(e);
                continue;
            }
        };
        let m = Measurement {
            subject_id,
            stratum: rec[idx[1]].to_string(),
            age,
            weight,
            height,
        };
        match cohort.insert(m) {
            Ok(()) => report.accepted += 1,
            Err(e) => skip(e.to_string()),
        }
    }
    Ok((cohort, report))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// Writes the cohort in canonical order (subject id, then age). Numbers use
/// the shortest decimal form that parses back to the same double.
pub fn write_cohort<W: Write>(cohort: &Cohort, writer: W) -> Result<(), CohortError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for m in cohort.measurements() {
        w.write_record([
            m.subject_id.clone(),
            m.stratum.clone(),
            m.age.to_string(),
            fmt_opt(m.weight),
            fmt_opt(m.height),
        ])?;
    }
    w.flush()?;
    Ok(())
}
