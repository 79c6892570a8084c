//! Extraction of systemic anticancer therapy (SACT) events from clinical
//! notes and their aggregation into patient-level treatment timelines.
//!
//! The pipeline runs in two stages. Each note is first processed on its own
//! by one of the [`extraction`] strategies, producing raw
//! ⟨SACT, relation, time⟩ triplets. The raw time expressions are then
//! normalized against the note's document time ([`timenorm`]) and the
//! surviving events are deduplicated per patient ([`timeline`]). [`eval`]
//! scores both stages, and [`dpo_prep`] turns gold annotations and sampled
//! generations into fine-tuning datasets.

pub mod corpus;
pub mod dictionary;
pub mod dpo_prep;
pub mod extraction;
pub mod gateway;
pub mod pipeline;
pub mod timenorm;
pub mod triplet;

pub use corpus::{CancerType, ClinicalNote, PatientRecord};
pub use triplet::{canonicalize, Relation, SactTriplet};
pub mod eval;
pub mod scalar;
pub mod timeline;

pub use scalar::Scalar;
pub use timeline::{NormalizedTriplet, PatientTimeline};

/// Note-level metrics in double precision.
pub type NoteMetrics = eval::NoteLevelMetrics<f64>;
/// Timeline metrics in double precision.
pub type TimelineScores = eval::TimelineMetrics<f64>;
/// Note-level metrics as exact fractions.
pub type ExactNoteMetrics = eval::NoteLevelMetrics<num_rational::Rational64>;
/// Timeline metrics as exact fractions.
pub type ExactTimelineScores = eval::TimelineMetrics<num_rational::Rational64>;
