//! Strict-match scoring at note level and timeline level.
//!
//! Conventions where the task definition is silent:
//!
//! * a patient with an empty predicted and an empty gold timeline scores
//!   F1 = 1 (see [`patient_f1`]);
//! * Type B is 0 when no patient in the universe has a gold event;
//! * patients outside the universe are ignored, patients in the universe
//!   without predictions are scored against an empty prediction;
//! * note-level counting uses set semantics, so duplicate predictions within
//!   a note count once.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::scalar::Scalar;
use crate::timeline::{EventKey, NormalizedTriplet, PatientTimeline};
use crate::triplet::{Relation, SactTriplet};

/// Human-readable statement of the scoring conventions, carried in reports.
pub const CONVENTIONS: &[&str] = &[
    "strict match on (lowercased whitespace-collapsed SACT, relation, ISO time value)",
    "patient with empty prediction and empty gold scores F1 = 1.0",
    "Type B = 0 when no patient has gold events",
    "universe patients without predictions are scored against an empty prediction",
    "note-level counts use set semantics (duplicates within a note collapse)",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NoteLevelMetrics<T> {
    pub true_positives: usize,
    pub false_positives: usize,
    pub false_negatives: usize,
    pub precision: T,
    pub recall: T,
    pub f1: T,
}

impl<T: Scalar> NoteLevelMetrics<T> {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize) -> Self {
        let precision = T::ratio(tp, tp + fp);
        let recall = T::ratio(tp, tp + fn_);
        Self {
            true_positives: tp,
            false_positives: fp,
            false_negatives: fn_,
            precision,
            recall,
            f1: T::harmonic(precision, recall),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimelineMetrics<T> {
    pub type_a_f1: T,
    pub type_b_f1: T,
    pub official: T,
    pub per_patient_f1: BTreeMap<String, T>,
    pub type_a_patients: usize,
    pub type_b_patients: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum EvalError {
    #[error("patient universe is empty")]
    EmptyUniverse,
}

/// All three components equal after canonicalization.
pub fn strict_match(pred: &NormalizedTriplet, gold: &NormalizedTriplet) -> bool {
    pred.sact_key() == gold.sact_key()
        && pred.relation() == gold.relation()
        && pred.time().value() == gold.time().value()
}

type RawKey = (String, Relation, String);

/// Micro P/R/F1 over raw (not time-normalized) triplets, keyed by note.
/// A note missing on one side counts as an empty set there.
pub fn note_micro<T: Scalar>(
    preds: &BTreeMap<String, Vec<SactTriplet>>,
    golds: &BTreeMap<String, Vec<SactTriplet>>,
) -> NoteLevelMetrics<T> {
    let notes: BTreeSet<&String> = preds.keys().chain(golds.keys()).collect();
    let as_set = |m: &BTreeMap<String, Vec<SactTriplet>>, k: &String| -> HashSet<RawKey> {
        m.get(k)
            .map(|v| v.iter().map(SactTriplet::canonical_key).collect())
            .unwrap_or_default()
    };
    let (mut tp, mut fp, mut fn_) = (0, 0, 0);
    for note in notes {
        let p = as_set(preds, note);
        let g = as_set(golds, note);
        let hit = p.intersection(&g).count();
        tp += hit;
        fp += p.len() - hit;
        fn_ += g.len() - hit;
    }
    NoteLevelMetrics::from_counts(tp, fp, fn_)
}

/// Per-patient strict-match F1. Empty prediction against empty gold is a
/// perfect score.
pub fn patient_f1<T: Scalar>(pred: &BTreeSet<EventKey>, gold: &BTreeSet<EventKey>) -> T {
    if pred.is_empty() && gold.is_empty() {
        return T::one();
    }
    let hit = pred.intersection(gold).count();
    T::harmonic(T::ratio(hit, pred.len()), T::ratio(hit, gold.len()))
}

fn keys_by_patient(timelines: &[PatientTimeline]) -> BTreeMap<&str, BTreeSet<EventKey>> {
    let mut out: BTreeMap<&str, BTreeSet<EventKey>> = BTreeMap::new();
    for t in timelines {
        out.entry(t.patient_id.as_str())
            .or_default()
            .extend(t.keys().cloned());
    }
    out
}

/// Type A (all universe patients), Type B (patients with gold events) and
/// their mean.
pub fn timeline_f1<T: Scalar>(
    preds: &[PatientTimeline],
    golds: &[PatientTimeline],
    universe: &[String],
) -> Result<TimelineMetrics<T>, EvalError> {
    let universe: BTreeSet<&str> = universe.iter().map(String::as_str).collect();
    if universe.is_empty() {
        return Err(EvalError::EmptyUniverse);
    }
    let pred = keys_by_patient(preds);
    let gold = keys_by_patient(golds);
    let empty = BTreeSet::new();

    let mut per_patient = BTreeMap::new();
    let mut type_b = Vec::new();
    for &patient in &universe {
        let g = gold.get(patient).unwrap_or(&empty);
        let score: T = patient_f1(pred.get(patient).unwrap_or(&empty), g);
        if !g.is_empty() {
            type_b.push(score);
        }
        per_patient.insert(patient.to_string(), score);
    }
    let type_a_f1 = T::mean(per_patient.values().copied());
    let type_b_patients = type_b.len();
    let type_b_f1 = T::mean(type_b);
    let two = T::one() + T::one();
    Ok(TimelineMetrics {
        type_a_f1,
        type_b_f1,
        official: (type_a_f1 + type_b_f1) / two,
        per_patient_f1: per_patient,
        type_a_patients: universe.len(),
        type_b_patients,
    })
}

/// Serializable evaluation report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub conventions: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub note_level: Option<NoteLevelMetrics<f64>>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub timeline_level: Option<TimelineMetrics<f64>>,
}

impl EvalReport {
    pub fn new(
        note_level: Option<NoteLevelMetrics<f64>>,
        timeline_level: Option<TimelineMetrics<f64>>,
    ) -> Self {
        Self {
            conventions: CONVENTIONS.iter().map(|s| s.to_string()).collect(),
            note_level,
            timeline_level,
        }
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serializes");
        s.push('\n');
        s
    }

    /// Fixed-width text table.
    pub fn table(&self) -> String {
        let mut out = String::new();
        for c in &self.conventions {
            let _ = writeln!(out, "# {c}");
        }
        if let Some(n) = &self.note_level {
            let _ = writeln!(
                out,
                "note-level     TP={} FP={} FN={}",
                n.true_positives, n.false_positives, n.false_negatives
            );
            let _ = writeln!(out, "  precision    {:.4}", n.precision);
            let _ = writeln!(out, "  recall       {:.4}", n.recall);
            let _ = writeln!(out, "  f1           {:.4}", n.f1);
        }
        if let Some(t) = &self.timeline_level {
            let _ = writeln!(out, "timeline-level");
            let _ = writeln!(
                out,
                "  type A f1    {:.4}  ({} patients)",
                t.type_a_f1, t.type_a_patients
            );
            let _ = writeln!(
                out,
                "  type B f1    {:.4}  ({} patients)",
                t.type_b_f1, t.type_b_patients
            );
            let _ = writeln!(out, "  official     {:.4}", t.official);
            for (p, f) in &t.per_patient_f1 {
                let _ = writeln!(out, "    {p:<20} {f:.4}");
            }
        }
        out
    }
}
