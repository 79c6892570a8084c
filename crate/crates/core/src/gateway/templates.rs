use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

const EXTRACTION: &str = include_str!("../../assets/prompts/extraction.txt");
const TAG_VERIFICATION: &str = include_str!("../../assets/prompts/tag_verification.txt");
const SENTENCE_RELATION: &str = include_str!("../../assets/prompts/sentence_relation.txt");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateId {
    /// Whole-note extraction, used by the baseline, thinking and fine-tuned
    /// strategies.
    Extraction,
    /// Dictionary tag verification over brace-wrapped sentences.
    TagVerification,
    /// Relation extraction over a tagged context window.
    SentenceRelation,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PromptError {
    #[error("unknown prompt template {0:?}")]
    UnknownTemplate(String),
    #[error("empty payload for template {0}")]
    EmptyPayload(TemplateId),
}

impl TemplateId {
    pub const ALL: [TemplateId; 3] = [
        TemplateId::Extraction,
        TemplateId::TagVerification,
        TemplateId::SentenceRelation,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TemplateId::Extraction => "extraction",
            TemplateId::TagVerification => "tag_verification",
            TemplateId::SentenceRelation => "sentence_relation",
        }
    }

    /// Raw template text, including its placeholder.
    pub fn text(self) -> &'static str {
        match self {
            TemplateId::Extraction => EXTRACTION,
            TemplateId::TagVerification => TAG_VERIFICATION,
            TemplateId::SentenceRelation => SENTENCE_RELATION,
        }
    }

    fn placeholder(self) -> &'static str {
        match self {
            TemplateId::Extraction => "{note}",
            TemplateId::TagVerification => "{sentences}",
            TemplateId::SentenceRelation => "{context}",
        }
    }

    /// Hex SHA-256 of the template text.
    pub fn digest(self) -> String {
        hex::encode(Sha256::digest(self.text().as_bytes()))
    }
}

impl fmt::Display for TemplateId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TemplateId {
    type Err = PromptError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TemplateId::ALL
            .into_iter()
            .find(|t| t.as_str() == s)
            .ok_or_else(|| PromptError::UnknownTemplate(s.to_string()))
    }
}

/// Substitutes `payload` for the template's placeholder. Empty payloads are
/// rejected; see [`render_prompt_lenient`].
pub fn render_prompt(template: TemplateId, payload: &str) -> Result<String, PromptError> {
    if payload.trim().is_empty() {
        return Err(PromptError::EmptyPayload(template));
    }
    Ok(render_prompt_lenient(template, payload))
}

pub fn render_prompt_lenient(template: TemplateId, payload: &str) -> String {
    let text = template.text();
    let at = text
        .rfind(template.placeholder())
        .expect("bundled template carries its placeholder");
    let mut out = String::with_capacity(text.len() + payload.len());
    out.push_str(&text[..at]);
    out.push_str(payload);
    out.push_str(text[at + template.placeholder().len()..].trim_end_matches('\n'));
    out
}
