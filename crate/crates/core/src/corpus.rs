//! Note corpus: loading, document-time detection and sentence splitting.
//!
//! On-disk layout, one directory per patient:
//!
//! ```text
//! <root>/<patient_id>/<note_id>.txt   UTF-8 note body
//! <root>/<patient_id>/gold.json       optional, note_id -> [[sact, relation, time], ...]
//! ```
//!
//! A note without a detectable document time still loads; only its relative
//! time expressions become unnormalizable downstream.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use chrono::{Datelike, NaiveDate};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::triplet::SactTriplet;

pub const GOLD_FILE: &str = "gold.json";

#[derive(Debug, thiserror::Error)]
pub enum CorpusError {
    #[error("no valid YYYYMMDD document time in note text")]
    NoDoctime,
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("unknown cancer type {0:?} (expected breast, melanoma or ovarian)")]
    UnknownCancerType(String),
}

impl CorpusError {
    fn format(path: &Path, reason: impl Into<String>) -> Self {
        CorpusError::Format {
            path: path.to_path_buf(),
            reason: reason.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CancerType {
    Breast,
    Melanoma,
    Ovarian,
}

impl CancerType {
    pub const ALL: [CancerType; 3] = [
        CancerType::Breast,
        CancerType::Melanoma,
        CancerType::Ovarian,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            CancerType::Breast => "breast",
            CancerType::Melanoma => "melanoma",
            CancerType::Ovarian => "ovarian",
        }
    }
}

impl fmt::Display for CancerType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for CancerType {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "breast" => Ok(CancerType::Breast),
            "melanoma" => Ok(CancerType::Melanoma),
            "ovarian" => Ok(CancerType::Ovarian),
            _ => Err(CorpusError::UnknownCancerType(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ClinicalNote {
    pub patient_id: String,
    pub note_id: String,
    pub text: String,
    pub doctime: Option<NaiveDate>,
}

impl ClinicalNote {
    /// Builds a note and detects its document time from the text.
    pub fn new(
        patient_id: impl Into<String>,
        note_id: impl Into<String>,
        text: impl Into<String>,
    ) -> Option<Self> {
        let text = text.into();
        if text.trim().is_empty() {
            return None;
        }
        let doctime = detect_doctime(&text).ok();
        Some(Self {
            patient_id: patient_id.into(),
            note_id: note_id.into(),
            text,
            doctime,
        })
    }

    /// `<patient_id>/<note_id>`, unique across a corpus.
    pub fn qualified_id(&self) -> String {
        qualified_note_id(&self.patient_id, &self.note_id)
    }
}

pub fn qualified_note_id(patient_id: &str, note_id: &str) -> String {
    format!("{patient_id}/{note_id}")
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnnotation {
    pub note_id: String,
    pub triplets: Vec<SactTriplet>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PatientRecord {
    pub patient_id: String,
    pub cancer_type: CancerType,
    pub notes: Vec<ClinicalNote>,
    /// One entry per note when the patient ships a gold file; notes the gold
    /// file does not mention carry an empty list.
    pub gold: Option<Vec<GoldAnnotation>>,
}

impl PatientRecord {
    pub fn gold_for(&self, note_id: &str) -> Option<&[SactTriplet]> {
        self.gold
            .as_ref()?
            .iter()
            .find(|g| g.note_id == note_id)
            .map(|g| g.triplets.as_slice())
    }
}

/// Finds the first run of exactly eight ASCII digits that reads as a valid
/// `YYYYMMDD` date with a year in 1900..=2100.
///
/// Runs that are part of a longer digit run are skipped entirely.
pub fn detect_doctime(text: &str) -> Result<NaiveDate, CorpusError> {
    let bytes = text.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if !bytes[i].is_ascii_digit() {
            i += 1;
            continue;
        }
        let start = i;
        while i < bytes.len() && bytes[i].is_ascii_digit() {
            i += 1;
        }
        if i - start == 8 {
            if let Some(date) = parse_yyyymmdd(&text[start..i]) {
                return Ok(date);
            }
        }
    }
    Err(CorpusError::NoDoctime)
}

fn parse_yyyymmdd(digits: &str) -> Option<NaiveDate> {
    let year: i32 = digits[0..4].parse().ok()?;
    let month: u32 = digits[4..6].parse().ok()?;
    let day: u32 = digits[6..8].parse().ok()?;
    if !(1900..=2100).contains(&year) {
        return None;
    }
    NaiveDate::from_ymd_opt(year, month, day).filter(|d| d.year() == year)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceSpan {
    pub index: usize,
    /// Byte offset of the first character.
    pub start: usize,
    /// Byte offset one past the last character.
    pub end: usize,
}

impl SentenceSpan {
    pub fn text<'a>(&self, note_text: &'a str) -> &'a str {
        &note_text[self.start..self.end]
    }
}

const ABBREVIATIONS: &[&str] = &[
    "dr", "mr", "mrs", "ms", "mg", "mcg", "ml", "kg", "e.g", "i.e", "vs", "no", "approx", "st",
    "pt", "jr", "sr", "prof", "fig", "q.d", "b.i.d", "t.i.d", "p.o", "a.m", "p.m",
];

const CLOSERS: &[char] = &['"', '\'', ')', ']', '’', '”'];

fn is_terminal(c: char) -> bool {
    matches!(c, '.' | '!' | '?')
}

/// Splits on `.`, `!` or `?` followed by whitespace, and on blank lines.
///
/// Offsets are byte offsets into `text`. Spans are trimmed, so together they
/// cover every non-whitespace character exactly once.
pub fn split_sentences(text: &str) -> Vec<SentenceSpan> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut spans = Vec::new();
    let mut start: Option<usize> = None;
    let mut last_end = 0usize;

    let close = |spans: &mut Vec<SentenceSpan>, start: &mut Option<usize>, end: usize| {
        if let Some(s) = start.take() {
            spans.push(SentenceSpan {
                index: spans.len(),
                start: s,
                end,
            });
        }
    };

    let mut k = 0;
    while k < chars.len() {
        let (pos, c) = chars[k];
        if c.is_whitespace() {
            if c == '\n' && start.is_some() && blank_line_follows(&chars, k) {
                close(&mut spans, &mut start, last_end);
            }
            k += 1;
            continue;
        }
        if start.is_none() {
            start = Some(pos);
        }
        last_end = pos + c.len_utf8();
        if is_terminal(c) {
            let mut j = k + 1;
            while j < chars.len() && (is_terminal(chars[j].1) || CLOSERS.contains(&chars[j].1)) {
                last_end = chars[j].0 + chars[j].1.len_utf8();
                j += 1;
            }
            let at_boundary = j == chars.len() || chars[j].1.is_whitespace();
            if at_boundary && !(c == '.' && j == k + 1 && is_abbreviation(text, pos)) {
                close(&mut spans, &mut start, last_end);
            }
            k = j;
            continue;
        }
        k += 1;
    }
    close(&mut spans, &mut start, last_end);
    spans
}

fn blank_line_follows(chars: &[(usize, char)], newline_at: usize) -> bool {
    for &(_, c) in &chars[newline_at + 1..] {
        if c == '\n' {
            return true;
        }
        if !c.is_whitespace() {
            return false;
        }
    }
    false
}

/// Whether the period at byte `dot` ends a guarded abbreviation.
fn is_abbreviation(text: &str, dot: usize) -> bool {
    let word_start = text[..dot]
        .rfind(char::is_whitespace)
        .map(|i| i + text[i..].chars().next().map_or(1, char::len_utf8))
        .unwrap_or(0);
    let word = text[word_start..dot]
        .trim_start_matches(|c: char| !c.is_alphanumeric())
        .to_lowercase();
    ABBREVIATIONS.contains(&word.as_str())
}

/// Loads every patient directory under `root`, sorted by patient id then
/// note id. All patients are assigned `cancer_type`.
pub fn load_corpus(
    root: &Path,
    cancer_type: CancerType,
) -> Result<Vec<PatientRecord>, CorpusError> {
    let entries = fs::read_dir(root).map_err(|source| CorpusError::Io {
        path: root.to_path_buf(),
        source,
    })?;
    let mut patient_dirs = Vec::new();
    for entry in entries {
        let entry = entry.map_err(|source| CorpusError::Io {
            path: root.to_path_buf(),
            source,
        })?;
        let path = entry.path();
        if path.is_dir() && !is_hidden(&path) {
            patient_dirs.push(path);
        }
    }
    patient_dirs.sort();

    let mut records = patient_dirs
        .par_iter()
        .map(|dir| load_patient(dir, cancer_type))
        .collect::<Result<Vec<_>, _>>()?;
    records.sort_by(|a, b| a.patient_id.cmp(&b.patient_id));
    Ok(records)
}

fn is_hidden(path: &Path) -> bool {
    path.file_name()
        .and_then(|n| n.to_str())
        .is_some_and(|n| n.starts_with('.'))
}

fn load_patient(dir: &Path, cancer_type: CancerType) -> Result<PatientRecord, CorpusError> {
    let patient_id = dir
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| CorpusError::format(dir, "patient directory name is not UTF-8"))?
        .to_string();

    let io_err = |path: &Path| {
        let path = path.to_path_buf();
        move |source| CorpusError::Io { path, source }
    };

    let mut notes = Vec::new();
    let mut gold_path = None;
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if !path.is_file() || is_hidden(&path) {
            continue;
        }
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default();
        if name == GOLD_FILE {
            gold_path = Some(path);
            continue;
        }
        if path.extension().and_then(|e| e.to_str()) != Some("txt") {
            continue;
        }
        let note_id = path
            .file_stem()
            .and_then(|s| s.to_str())
            .ok_or_else(|| CorpusError::format(&path, "note file name is not UTF-8"))?
            .to_string();
        let bytes = fs::read(&path).map_err(io_err(&path))?;
        let text = String::from_utf8(bytes)
            .map_err(|_| CorpusError::format(&path, "note is not valid UTF-8"))?;
        let note = ClinicalNote::new(&patient_id, note_id, text)
            .ok_or_else(|| CorpusError::format(&path, "note text is empty"))?;
        notes.push(note);
    }
    notes.sort_by(|a, b| a.note_id.cmp(&b.note_id));

    let gold = match gold_path {
        Some(path) => Some(read_gold(&path, &notes)?),
        None => None,
    };

    Ok(PatientRecord {
        patient_id,
        cancer_type,
        notes,
        gold,
    })
}

fn read_gold(path: &Path, notes: &[ClinicalNote]) -> Result<Vec<GoldAnnotation>, CorpusError> {
    let raw = fs::read_to_string(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut by_note: BTreeMap<String, Vec<SactTriplet>> = serde_json::from_str(&raw)
        .map_err(|e| CorpusError::format(path, format!("malformed gold file: {e}")))?;
    let known: BTreeSet<&str> = notes.iter().map(|n| n.note_id.as_str()).collect();
    if let Some(unknown) = by_note.keys().find(|k| !known.contains(k.as_str())) {
        return Err(CorpusError::format(
            path,
            format!("gold annotations reference unknown note {unknown:?}"),
        ));
    }
    Ok(notes
        .iter()
        .map(|n| GoldAnnotation {
            note_id: n.note_id.clone(),
            triplets: by_note.remove(&n.note_id).unwrap_or_default(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn date(y: i32, m: u32, d: u32) -> NaiveDate {
        NaiveDate::from_ymd_opt(y, m, d).unwrap()
    }

    #[test]
    fn doctime_header() {
        assert_eq!(
            detect_doctime("Date of service: 20130115 ...").unwrap(),
            date(2013, 1, 15)
        );
    }

    #[test]
    fn doctime_skips_invalid_run() {
        assert_eq!(
            detect_doctime("ID 99999999 then 20120726").unwrap(),
            date(2012, 7, 26)
        );
    }

    #[test]
    fn doctime_absent() {
        assert!(matches!(
            detect_doctime("no digits here"),
            Err(CorpusError::NoDoctime)
        ));
    }

    #[test]
    fn doctime_ignores_longer_runs_and_implausible_years() {
        assert!(detect_doctime("MRN 2013011512").is_err());
        assert!(detect_doctime("code 18000101").is_err());
        assert!(detect_doctime("2013-01-15").is_err());
        assert_eq!(
            detect_doctime("x20130229y20120229").unwrap(),
            date(2012, 2, 29)
        );
    }

    fn texts(text: &str) -> Vec<&str> {
        split_sentences(text).iter().map(|s| s.text(text)).collect()
    }

    #[test]
    fn sentences_basic() {
        assert_eq!(
            texts("She received Taxol. Next cycle soon."),
            vec!["She received Taxol.", "Next cycle soon."]
        );
    }

    #[test]
    fn sentences_decimal_guard() {
        assert_eq!(texts("Dose 1.5 mg given."), vec!["Dose 1.5 mg given."]);
    }

    #[test]
    fn sentences_blank_line() {
        assert_eq!(texts("LineA\n\nLineB"), vec!["LineA", "LineB"]);
        assert_eq!(texts("LineA\nLineB"), vec!["LineA\nLineB"]);
        assert_eq!(texts("LineA\n  \t\n LineB"), vec!["LineA", "LineB"]);
    }

    #[test]
    fn sentences_abbreviation_guard() {
        assert_eq!(
            texts("Seen by Dr. Smith today. Gave 5 mg. of drug."),
            vec!["Seen by Dr. Smith today.", "Gave 5 mg. of drug."]
        );
    }

    #[test]
    fn sentences_closers_and_runs() {
        assert_eq!(
            texts("Was it Taxol?! (Yes.) Done"),
            vec!["Was it Taxol?!", "(Yes.)", "Done"]
        );
    }

    #[test]
    fn sentences_degenerate() {
        assert_eq!(texts("   "), Vec::<&str>::new());
        assert_eq!(texts("no punctuation"), vec!["no punctuation"]);
        assert_eq!(texts("..."), vec!["..."]);
    }

    #[test]
    fn cancer_type_parse() {
        assert_eq!("Breast".parse::<CancerType>().unwrap(), CancerType::Breast);
        assert!("lung".parse::<CancerType>().is_err());
    }
}
