//! The raw ⟨SACT, relation, time⟩ event as extracted from a single note.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

/// Temporal relation between a therapy mention and a time expression.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Relation {
    #[serde(rename = "BEGINS-ON")]
    BeginsOn,
    #[serde(rename = "ENDS-ON")]
    EndsOn,
    #[serde(rename = "CONTAINS-1")]
    Contains,
}

impl Relation {
    pub const ALL: [Relation; 3] = [Relation::BeginsOn, Relation::EndsOn, Relation::Contains];

    pub fn as_str(self) -> &'static str {
        match self {
            Relation::BeginsOn => "BEGINS-ON",
            Relation::EndsOn => "ENDS-ON",
            Relation::Contains => "CONTAINS-1",
        }
    }
}

impl fmt::Display for Relation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("illegal relation label {0:?}")]
pub struct IllegalRelation(pub String);

impl FromStr for Relation {
    type Err = IllegalRelation;

    /// Exact match only; near-misses such as `begins-on` are rejected.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "BEGINS-ON" => Ok(Relation::BeginsOn),
            "ENDS-ON" => Ok(Relation::EndsOn),
            "CONTAINS-1" => Ok(Relation::Contains),
            other => Err(IllegalRelation(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum TripletError {
    #[error("SACT mention is empty")]
    EmptySact,
    #[error("time expression is empty")]
    EmptyTime,
}

/// A raw extracted event. Both strings keep their surface form verbatim.
///
/// Serialized as a three-element array `[sact, relation, time]`, the shape
/// used by gold files and extraction manifests.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SactTriplet {
    sact: String,
    relation: Relation,
    time_raw: String,
}

impl SactTriplet {
    pub fn new(
        sact: impl Into<String>,
        relation: Relation,
        time_raw: impl Into<String>,
    ) -> Result<Self, TripletError> {
        let sact = sact.into();
        let time_raw = time_raw.into();
        if sact.trim().is_empty() {
            return Err(TripletError::EmptySact);
        }
        if time_raw.trim().is_empty() {
            return Err(TripletError::EmptyTime);
        }
        Ok(Self {
            sact,
            relation,
            time_raw,
        })
    }

    pub fn sact(&self) -> &str {
        &self.sact
    }

    pub fn relation(&self) -> Relation {
        self.relation
    }

    pub fn time_raw(&self) -> &str {
        &self.time_raw
    }

    /// Key used for strict matching of raw triplets: every string field
    /// canonicalized, relation kept.
    pub fn canonical_key(&self) -> (String, Relation, String) {
        (
            canonicalize(&self.sact),
            self.relation,
            canonicalize(&self.time_raw),
        )
    }
}

impl fmt::Display for SactTriplet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "<{}, {}, {}>", self.sact, self.relation, self.time_raw)
    }
}

impl Serialize for SactTriplet {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        (&self.sact, self.relation.as_str(), &self.time_raw).serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for SactTriplet {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        use serde::de::Error;
        let (sact, relation, time): (String, String, String) =
            Deserialize::deserialize(deserializer)?;
        let relation = relation.parse::<Relation>().map_err(D::Error::custom)?;
        SactTriplet::new(sact, relation, time).map_err(D::Error::custom)
    }
}

/// Lowercases and collapses every whitespace run to a single space.
pub fn canonicalize(s: &str) -> String {
    s.split_whitespace()
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join(" ")
}
