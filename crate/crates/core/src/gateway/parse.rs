//! Tolerant parsing of triplet arrays out of free-form model answers.

use serde::Serialize;
use serde_json::Value;

use crate::triplet::{Relation, SactTriplet};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("no well-formed JSON array in model answer")]
pub struct ParseError;

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParsedTriplets {
    pub triplets: Vec<SactTriplet>,
    /// Elements that were not a usable triplet.
    pub dropped: usize,
}

/// Extracts the first well-formed triplet array from `answer`.
///
/// Accepts a JSON array of `{"SACT", "relation", "time"}` objects anywhere in
/// the text (prose and code fences are skipped), as well as the brace-wrapped
/// list of `[sact, relation, time]` arrays produced by the sentence-level
/// template. Elements with missing fields, non-string fields, empty strings
/// or an illegal relation are dropped and counted. Extra keys are ignored.
pub fn parse_triplet_array(answer: &str) -> Result<ParsedTriplets, ParseError> {
    let text = match answer.rfind("</think>") {
        Some(at) => &answer[at + "</think>".len()..],
        None => answer,
    };
    for (i, b) in text.bytes().enumerate() {
        let found = match b {
            b'[' => first_value(&text[i..]).and_then(|v| match v {
                Value::Array(items) => Some(items),
                _ => None,
            }),
            b'{' => brace_list(&text[i..]),
            _ => None,
        };
        if let Some(items) = found {
            return Ok(convert(items));
        }
    }
    Err(ParseError)
}

fn first_value(text: &str) -> Option<Value> {
    serde_json::Deserializer::from_str(text)
        .into_iter::<Value>()
        .next()?
        .ok()
}

/// `{ [..], [..] }` or `{}` at the start of `text`.
fn brace_list(text: &str) -> Option<Vec<Value>> {
    let close = matching_brace(text)?;
    let inner = text[1..close].trim();
    if inner.is_empty() {
        return Some(Vec::new());
    }
    if !inner.starts_with('[') {
        return None;
    }
    match serde_json::from_str::<Value>(&format!("[{inner}]")).ok()? {
        Value::Array(items) if items.iter().all(Value::is_array) => Some(items),
        _ => None,
    }
}

/// Byte index of the `}` closing the `{` at index 0, skipping string contents.
fn matching_brace(text: &str) -> Option<usize> {
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, b) in text.bytes().enumerate() {
        if in_string {
            match b {
                _ if escaped => escaped = false,
                b'\\' => escaped = true,
                b'"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match b {
            b'"' => in_string = true,
            b'{' => depth += 1,
            b'}' => {
                depth = depth.checked_sub(1)?;
                if depth == 0 {
                    return Some(i);
                }
            }
            _ => {}
        }
    }
    None
}

fn convert(items: Vec<Value>) -> ParsedTriplets {
    let mut out = ParsedTriplets::default();
    for item in items {
        match element_to_triplet(&item) {
            Some(t) => out.triplets.push(t),
            None => out.dropped += 1,
        }
    }
    if out.dropped > 0 {
        log::warn!("dropped {} malformed triplet element(s)", out.dropped);
    }
    out
}

fn element_to_triplet(item: &Value) -> Option<SactTriplet> {
    let (sact, relation, time) = match item {
        Value::Object(map) => (
            map.get("SACT")?.as_str()?,
            map.get("relation")?.as_str()?,
            map.get("time")?.as_str()?,
        ),
        Value::Array(parts) if parts.len() == 3 => {
            (parts[0].as_str()?, parts[1].as_str()?, parts[2].as_str()?)
        }
        _ => return None,
    };
    let relation = relation.parse::<Relation>().ok()?;
    SactTriplet::new(sact, relation, time).ok()
}

#[derive(Serialize)]
struct SchemaTriplet<'a> {
    #[serde(rename = "SACT")]
    sact: &'a str,
    relation: &'a str,
    time: &'a str,
}

/// Compact JSON in the extraction schema, keys ordered SACT, relation, time.
pub fn serialize_triplet_array(triplets: &[SactTriplet]) -> String {
    let rows: Vec<SchemaTriplet<'_>> = triplets
        .iter()
        .map(|t| SchemaTriplet {
            sact: t.sact(),
            relation: t.relation().as_str(),
            time: t.time_raw(),
        })
        .collect();
    serde_json::to_string(&rows).expect("string-only rows serialize")
}
