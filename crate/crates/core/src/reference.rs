//! Model-free screening against a matched peer group.
//!
//! Peers are subjects whose weight at an anchor age was close to the probe's;
//! the probe's weight at a later target age is then ranked among the peers'.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cohort_io::{Cohort, Measurement};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ReferenceError {
    #[error("invalid criteria: {0}")]
    InvalidCriteria(String),
    #[error("subject {0} not in cohort")]
    UnknownSubject(String),
    #[error("subject {0} has no weight within the anchor window")]
    NoAnchor(String),
    #[error("subject {0} has no weight within the target window")]
    NoTarget(String),
    #[error("empty peer set")]
    EmptyPeers,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCriteria {
    pub anchor_age: f64,
    #[serde(default = "default_age_window")]
    pub age_window: f64,
    #[serde(default = "default_weight_window")]
    pub weight_window: f64,
    pub target_age: f64,
    #[serde(default = "default_target_window")]
    pub target_window: f64,
    /// Only consider peers from the probe's stratum.
    #[serde(default)]
    pub same_stratum: bool,
}

fn default_age_window() -> f64 {
    0.04
}

fn default_weight_window() -> f64 {
    0.25
}

fn default_target_window() -> f64 {
    0.05
}

impl ReferenceCriteria {
    /// Default windows around the two ages.
    pub fn new(anchor_age: f64, target_age: f64) -> Self {
        Self {
            anchor_age,
            age_window: default_age_window(),
            weight_window: default_weight_window(),
            target_age,
            target_window: default_target_window(),
            same_stratum: false,
        }
    }

    pub fn validate(&self) -> Result<(), ReferenceError> {
        let ok = |w: f64| w.is_finite() && w >= 0.0;
        if !(ok(self.age_window) && ok(self.weight_window) && ok(self.target_window)) {
            return Err(ReferenceError::InvalidCriteria("windows must be finite and nonnegative".into()));
        }
        if !(self.anchor_age.is_finite() && self.target_age.is_finite() && self.target_age > self.anchor_age) {
            return Err(ReferenceError::InvalidCriteria("target age must exceed anchor age".into()));
        }
        Ok(())
    }
}

/// Weighed visit within `window` of `center` that is nearest the center;
/// ties go to the earlier visit.
fn nearest<'a>(
    visits: &'a [Measurement],
    center: f64,
    window: f64,
    extra: impl Fn(&Measurement) -> bool,
) -> Option<&'a Measurement> {
    visits
        .iter()
        .filter(|m| m.weight.is_some() && (m.age - center).abs() <= window && extra(m))
        .fold(None, |best: Option<&Measurement>, m| match best {
            Some(b) if (b.age - center).abs() <= (m.age - center).abs() => Some(b),
            _ => Some(m),
        })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Peer {
    pub subject: String,
    pub anchor: Measurement,
    pub target: Measurement,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeerSet {
    pub probe_anchor: Measurement,
    /// The probe's own target visit, if it has one.
    pub probe_target: Option<Measurement>,
    pub peers: Vec<Peer>,
}

impl PeerSet {
    pub fn target_weights(&self) -> Vec<f64> {
        self.peers.iter().filter_map(|p| p.target.weight).collect()
    }
}

/// All other subjects matching the probe at the anchor visit and measured
/// near the target age, in subject order.
pub fn select_peers(cohort: &Cohort, subject_id: &str, criteria: &ReferenceCriteria) -> Result<PeerSet, ReferenceError> {
    criteria.validate()?;
    let probe = cohort
        .subject(subject_id)
        .ok_or_else(|| ReferenceError::UnknownSubject(subject_id.to_string()))?;
    let anchor = nearest(probe, criteria.anchor_age, criteria.age_window, |_| true)
        .ok_or_else(|| ReferenceError::NoAnchor(subject_id.to_string()))?;
    let w0 = anchor.weight.unwrap();
    let probe_target = nearest(probe, criteria.target_age, criteria.target_window, |_| true).cloned();
    let peers = cohort
        .subjects()
        .filter(|(id, visits)| {
            *id != subject_id && (!criteria.same_stratum || visits.first().is_some_and(|m| m.stratum == anchor.stratum))
        })
        .filter_map(|(id, visits)| {
            let a = nearest(visits, criteria.anchor_age, criteria.age_window, |m| {
                (m.weight.unwrap() - w0).abs() <= criteria.weight_window
            })?;
            let t = nearest(visits, criteria.target_age, criteria.target_window, |_| true)?;
            Some(Peer {
                subject: id.to_string(),
                anchor: a.clone(),
                target: t.clone(),
            })
        })
        .collect();
    Ok(PeerSet {
        probe_anchor: anchor.clone(),
        probe_target,
        peers,
    })
}

/// Midrank percentile: `100·(#below + #equal/2) / #peers`.
pub fn empirical_percentile(peer_values: &[f64], value: f64) -> Result<f64, ReferenceError> {
    if peer_values.is_empty() {
        return Err(ReferenceError::EmptyPeers);
    }
    let below = peer_values.iter().filter(|&&v| v < value).count() as f64;
    let equal = peer_values.iter().filter(|&&v| v == value).count() as f64;
    Ok(100.0 * (below + 0.5 * equal) / peer_values.len() as f64)
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeavierPeer {
    pub subject: String,
    pub weight: f64,
    /// Peer minus probe height in cm; `None` when either is missing.
    pub height_diff: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct HeightReport {
    pub heavier: Vec<HeavierPeer>,
    pub taller: usize,
    pub shorter: usize,
    pub same_height: usize,
    pub unknown: usize,
}

/// Height differences of the peers heavier than the probe at the target age.
pub fn peer_comparison_report(peers: &[Peer], probe_target: &Measurement) -> HeightReport {
    let mut report = HeightReport::default();
    let Some(w) = probe_target.weight else {
        return report;
    };
    for p in peers {
        let Some(pw) = p.target.weight.filter(|&pw| pw > w) else {
            continue;
        };
        let diff = match (p.target.height, probe_target.height) {
            (Some(a), Some(b)) => Some(a - b),
            _ => None,
        };
        match diff {
            Some(d) if d > 0.0 => report.taller += 1,
            Some(d) if d < 0.0 => report.shorter += 1,
            Some(_) => report.same_height += 1,
            None => report.unknown += 1,
        }
        report.heavier.push(HeavierPeer {
            subject: p.subject.clone(),
            weight: pw,
            height_diff: diff,
        });
    }
    report
}
