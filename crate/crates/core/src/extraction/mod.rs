//! Note-level extraction strategies.

mod postprocess;
mod strategies;

use std::fmt;
use std::ops::AddAssign;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::triplet::SactTriplet;

pub use postprocess::postprocess_triplets;
pub use strategies::{verify_tags, DictionaryPipelineConfig, Extractor, VerifiedTags};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Baseline,
    Thinking,
    ThinkingPost,
    Dictionary,
    SftModel,
    DpoModel,
    Ensemble,
}

impl Strategy {
    pub const ALL: [Strategy; 7] = [
        Strategy::Baseline,
        Strategy::Thinking,
        Strategy::ThinkingPost,
        Strategy::Dictionary,
        Strategy::SftModel,
        Strategy::DpoModel,
        Strategy::Ensemble,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Strategy::Baseline => "baseline",
            Strategy::Thinking => "thinking",
            Strategy::ThinkingPost => "thinking_post",
            Strategy::Dictionary => "dictionary",
            Strategy::SftModel => "sft_model",
            Strategy::DpoModel => "dpo_model",
            Strategy::Ensemble => "ensemble",
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("unknown strategy {0:?}")]
pub struct UnknownStrategy(pub String);

impl FromStr for Strategy {
    type Err = UnknownStrategy;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Strategy::ALL
            .into_iter()
            .find(|x| x.as_str() == s)
            .ok_or_else(|| UnknownStrategy(s.to_string()))
    }
}

/// Non-fatal problems met while extracting one note.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionWarnings {
    /// Answers without any well-formed triplet array.
    pub parse_failures: u32,
    /// Array elements discarded for missing fields or illegal relations.
    pub dropped_elements: u32,
    /// Generations that stopped at the token limit.
    pub truncated: u32,
    /// Verification outputs rejected in favour of the dictionary tagging.
    pub verification_fallbacks: u32,
    /// Model calls that failed outright; the note degrades to no extractions.
    pub failed_calls: u32,
}

impl ExtractionWarnings {
    pub fn total(&self) -> u32 {
        self.parse_failures
            + self.dropped_elements
            + self.truncated
            + self.verification_fallbacks
            + self.failed_calls
    }
}

impl AddAssign for ExtractionWarnings {
    fn add_assign(&mut self, rhs: Self) {
        self.parse_failures += rhs.parse_failures;
        self.dropped_elements += rhs.dropped_elements;
        self.truncated += rhs.truncated;
        self.verification_fallbacks += rhs.verification_fallbacks;
        self.failed_calls += rhs.failed_calls;
    }
}

/// Triplets extracted from one note by one strategy.
///
/// Ensemble and dictionary extractions may contain duplicates; they are
/// removed during aggregation.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NoteExtraction {
    pub patient_id: String,
    pub note_id: String,
    pub strategy: Strategy,
    pub triplets: Vec<SactTriplet>,
    #[serde(default)]
    pub warnings: ExtractionWarnings,
}

impl NoteExtraction {
    pub fn empty(patient_id: &str, note_id: &str, strategy: Strategy) -> Self {
        Self {
            patient_id: patient_id.to_string(),
            note_id: note_id.to_string(),
            strategy,
            triplets: Vec::new(),
            warnings: ExtractionWarnings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("ensemble input for {found} does not belong to note {expected}")]
pub struct MixedNoteError {
    pub expected: String,
    pub found: String,
}

/// Concatenates the triplet lists of several extractions of the same note,
/// in argument order and without deduplication.
pub fn ensemble_concat(
    patient_id: &str,
    note_id: &str,
    extractions: &[NoteExtraction],
) -> Result<NoteExtraction, MixedNoteError> {
    let mut out = NoteExtraction::empty(patient_id, note_id, Strategy::Ensemble);
    for e in extractions {
        if e.patient_id != patient_id || e.note_id != note_id {
            return Err(MixedNoteError {
                expected: format!("{patient_id}/{note_id}"),
                found: format!("{}/{}", e.patient_id, e.note_id),
            });
        }
        out.triplets.extend(e.triplets.iter().cloned());
        out.warnings += e.warnings;
    }
    Ok(out)
}
