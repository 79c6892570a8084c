//! Time normalization of note-level extractions and per-patient
//! deduplication into timelines.
//!
//! Timeline file format: a JSON object mapping patient id to an array of
//! `[sact, relation, time]` rows, sorted by time value, then SACT, then
//! relation. Gold timelines use the same format.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::ClinicalNote;
use crate::extraction::NoteExtraction;
use crate::timenorm::{normalize, Anchor, NormalizeOptions, NormalizedTime, UnnormalizableReason};
use crate::triplet::{canonicalize, Relation, SactTriplet};

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct NormalizedTriplet {
    sact_key: String,
    sact_surface: String,
    relation: Relation,
    time: NormalizedTime,
}

/// Dedup key: canonical SACT, relation, ISO value.
pub type EventKey = (String, Relation, String);

impl NormalizedTriplet {
    pub fn new(sact_surface: impl Into<String>, relation: Relation, time: NormalizedTime) -> Self {
        let sact_surface = sact_surface.into();
        Self {
            sact_key: canonicalize(&sact_surface),
            sact_surface,
            relation,
            time,
        }
    }

    pub fn sact_key(&self) -> &str {
        &self.sact_key
    }

    pub fn sact_surface(&self) -> &str {
        &self.sact_surface
    }

    pub fn relation(&self) -> Relation {
        self.relation
    }

    pub fn time(&self) -> &NormalizedTime {
        &self.time
    }

    pub fn key(&self) -> EventKey {
        (
            self.sact_key.clone(),
            self.relation,
            self.time.value().to_string(),
        )
    }
}

/// Count of discarded triplets per reason.
pub type DropHistogram = BTreeMap<UnnormalizableReason, usize>;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NormalizationOutcome {
    pub triplets: Vec<NormalizedTriplet>,
    pub drops: DropHistogram,
}

/// Normalizes every time expression of `triplets` against `note`'s document
/// time; unnormalizable triplets are dropped and counted.
pub fn normalize_triplets(
    triplets: &[SactTriplet],
    note: &ClinicalNote,
    options: NormalizeOptions,
) -> NormalizationOutcome {
    let anchor = note.doctime.map(Anchor);
    let mut out = NormalizationOutcome::default();
    for t in triplets {
        match normalize(t.time_raw(), anchor, options) {
            Ok(time) => out
                .triplets
                .push(NormalizedTriplet::new(t.sact(), t.relation(), time)),
            Err(e) => *out.drops.entry(e.reason).or_default() += 1,
        }
    }
    out
}

pub fn normalize_extraction(
    extraction: &NoteExtraction,
    note: &ClinicalNote,
    options: NormalizeOptions,
) -> NormalizationOutcome {
    normalize_triplets(&extraction.triplets, note, options)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PatientTimeline {
    pub patient_id: String,
    events: BTreeMap<EventKey, NormalizedTriplet>,
}

impl PatientTimeline {
    pub fn new(patient_id: impl Into<String>) -> Self {
        Self {
            patient_id: patient_id.into(),
            events: BTreeMap::new(),
        }
    }

    /// Adds an event unless one with the same key exists; the first surface
    /// form seen is kept.
    pub fn insert(&mut self, event: NormalizedTriplet) -> bool {
        match self.events.entry(event.key()) {
            std::collections::btree_map::Entry::Occupied(_) => false,
            std::collections::btree_map::Entry::Vacant(v) => {
                v.insert(event);
                true
            }
        }
    }

    pub fn len(&self) -> usize {
        self.events.len()
    }

    pub fn is_empty(&self) -> bool {
        self.events.is_empty()
    }

    pub fn events(&self) -> impl Iterator<Item = &NormalizedTriplet> {
        self.events.values()
    }

    pub fn contains_key(&self, key: &EventKey) -> bool {
        self.events.contains_key(key)
    }

    pub fn keys(&self) -> impl Iterator<Item = &EventKey> {
        self.events.keys()
    }

    /// Rows in file order: time value, then SACT, then relation.
    pub fn sorted_rows(&self) -> Vec<[&str; 3]> {
        let mut rows: Vec<[&str; 3]> = self
            .events
            .values()
            .map(|e| [e.sact_key.as_str(), e.relation.as_str(), e.time.value()])
            .collect();
        rows.sort_by(|a, b| (a[2], a[0], a[1]).cmp(&(b[2], b[0], b[1])));
        rows
    }
}

/// Set union of `normalized` keyed by (SACT key, relation, time value).
pub fn aggregate<I>(patient_id: &str, normalized: I) -> PatientTimeline
where
    I: IntoIterator<Item = NormalizedTriplet>,
{
    let mut timeline = PatientTimeline::new(patient_id);
    for event in normalized {
        timeline.insert(event);
    }
    timeline
}

/// Byte-deterministic rendering of the timeline file.
pub fn render_timelines(timelines: &[PatientTimeline]) -> String {
    let mut by_patient: BTreeMap<&str, Vec<[&str; 3]>> = BTreeMap::new();
    for t in timelines {
        by_patient
            .entry(t.patient_id.as_str())
            .or_default()
            .extend(t.sorted_rows());
    }
    if by_patient.is_empty() {
        return "{}\n".to_string();
    }
    let q = |s: &str| serde_json::to_string(s).expect("strings serialize");
    let mut out = String::from("{\n");
    let n = by_patient.len();
    for (i, (patient, mut rows)) in by_patient.into_iter().enumerate() {
        rows.sort_by(|a, b| (a[2], a[0], a[1]).cmp(&(b[2], b[0], b[1])));
        rows.dedup();
        let _ = write!(out, "  {}: [", q(patient));
        for (j, row) in rows.iter().enumerate() {
            let sep = if j + 1 == rows.len() { "" } else { "," };
            let _ = write!(
                out,
                "\n    [{}, {}, {}]{sep}",
                q(row[0]),
                q(row[1]),
                q(row[2])
            );
        }
        if !rows.is_empty() {
            out.push_str("\n  ");
        }
        out.push(']');
        out.push_str(if i + 1 == n { "\n" } else { ",\n" });
    }
    out.push_str("}\n");
    out
}

pub fn write_timelines(timelines: &[PatientTimeline], path: &Path) -> std::io::Result<()> {
    fs::write(path, render_timelines(timelines))
}

#[derive(Debug, thiserror::Error)]
pub enum TimelineFileError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed timeline file: {0}")]
    Format(String),
}

pub fn parse_timelines(text: &str) -> Result<Vec<PatientTimeline>, TimelineFileError> {
    let raw: BTreeMap<String, Vec<(String, String, String)>> =
        serde_json::from_str(text).map_err(|e| TimelineFileError::Format(e.to_string()))?;
    raw.into_iter()
        .map(|(patient_id, rows)| {
            let mut timeline = PatientTimeline::new(patient_id);
            for (sact, relation, time) in rows {
                let relation = relation
                    .parse::<Relation>()
                    .map_err(|e| TimelineFileError::Format(e.to_string()))?;
                let time = NormalizedTime::parse(&time)
                    .map_err(|e| TimelineFileError::Format(e.to_string()))?;
                if sact.trim().is_empty() {
                    return Err(TimelineFileError::Format(
                        "empty SACT in timeline row".into(),
                    ));
                }
                timeline.insert(NormalizedTriplet::new(sact, relation, time));
            }
            Ok(timeline)
        })
        .collect()
}

pub fn read_timelines(path: &Path) -> Result<Vec<PatientTimeline>, TimelineFileError> {
    let text = fs::read_to_string(path).map_err(|source| TimelineFileError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_timelines(&text)
}

/// Index by patient id, merging duplicates.
pub fn index_timelines(timelines: &[PatientTimeline]) -> HashMap<&str, Vec<&PatientTimeline>> {
    let mut map: HashMap<&str, Vec<&PatientTimeline>> = HashMap::new();
    for t in timelines {
        map.entry(t.patient_id.as_str()).or_default().push(t);
    }
    map
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn day(s: &str) -> NormalizedTime {
        NormalizedTime::parse(s).unwrap()
    }

    fn ev(s: &str, r: Relation, t: &str) -> NormalizedTriplet {
        NormalizedTriplet::new(s, r, day(t))
    }

    fn note(doctime: Option<NaiveDate>) -> ClinicalNote {
        let mut n = ClinicalNote::new("p", "n", "text").unwrap();
        n.doctime = doctime;
        n
    }

    #[test]
    fn normalizes_and_drops() {
        let triplets = vec![
            SactTriplet::new("Herceptin", Relation::BeginsOn, "12/27/2011").unwrap(),
            SactTriplet::new("chemo", Relation::Contains, "midway through").unwrap(),
            SactTriplet::new("Taxol", Relation::Contains, "today").unwrap(),
        ];
        let out = normalize_triplets(&triplets, &note(None), NormalizeOptions::default());
        assert_eq!(
            out.triplets,
            vec![ev("Herceptin", Relation::BeginsOn, "2011-12-27")]
        );
        assert_eq!(out.triplets[0].sact_key(), "herceptin");
        assert_eq!(out.drops[&UnnormalizableReason::UnknownShape], 1);
        assert_eq!(out.drops[&UnnormalizableReason::MissingAnchor], 1);
    }

    #[test]
    fn dedup_across_notes() {
        let t = aggregate(
            "p",
            vec![
                ev("Taxol", Relation::Contains, "2012-07-20"),
                ev("taxol", Relation::Contains, "2012-07-20"),
            ],
        );
        assert_eq!(t.len(), 1);
        assert_eq!(t.events().next().unwrap().sact_surface(), "Taxol");
    }

    #[test]
    fn begins_and_ends_same_day_kept() {
        let t = aggregate(
            "p",
            vec![
                ev("cabotaxol", Relation::BeginsOn, "2012-01-12"),
                ev("cabotaxol", Relation::EndsOn, "2012-01-12"),
            ],
        );
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn no_entity_consolidation() {
        let t = aggregate(
            "p",
            vec![
                ev("il2", Relation::Contains, "2013-03-01"),
                ev("il-2", Relation::Contains, "2013-03-01"),
            ],
        );
        assert_eq!(t.len(), 2);
    }

    #[test]
    fn render_empty_and_sorted() {
        assert_eq!(render_timelines(&[]), "{}\n");
        let t = aggregate(
            "p1",
            vec![
                ev("taxol", Relation::EndsOn, "2012-07-20"),
                ev("ac", Relation::BeginsOn, "2012-03-01"),
            ],
        );
        let s = render_timelines(&[t, PatientTimeline::new("p0")]);
        assert_eq!(
            s,
            "{\n  \"p0\": [],\n  \"p1\": [\n    [\"ac\", \"BEGINS-ON\", \"2012-03-01\"],\n    [\"taxol\", \"ENDS-ON\", \"2012-07-20\"]\n  ]\n}\n"
        );
        let back = parse_timelines(&s).unwrap();
        assert_eq!(render_timelines(&back), s);
    }

    #[test]
    fn parse_rejects_bad_rows() {
        assert!(parse_timelines(r#"{"p": [["taxol", "STARTS", "2012"]]}"#).is_err());
        assert!(parse_timelines(r#"{"p": [["taxol", "ENDS-ON", "last week"]]}"#).is_err());
        assert!(parse_timelines(r#"["p"]"#).is_err());
    }
}
