use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

use super::{postprocess_triplets, ExtractionWarnings, NoteExtraction, Strategy};
use crate::corpus::ClinicalNote;
use crate::dictionary::{select_candidate_windows, tag_note, SactDictionary, TaggedSentence};
use crate::gateway::{
    parse_triplet_array, ChatRequest, Gateway, GatewayError, SamplingParams, TemplateId,
    DEFAULT_MAX_TOKENS, THINKING_MAX_TOKENS,
};
use crate::triplet::SactTriplet;

/// Thinking switches for the two model-backed steps of the dictionary
/// pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DictionaryPipelineConfig {
    pub verify_thinking: bool,
    pub relation_thinking: bool,
}

impl Default for DictionaryPipelineConfig {
    fn default() -> Self {
        Self {
            verify_thinking: true,
            relation_thinking: true,
        }
    }
}

/// Runs extraction strategies for one configured model.
#[derive(Debug, Clone, Copy)]
pub struct Extractor<'a> {
    gateway: &'a Gateway,
    model: &'a str,
    sampling: SamplingParams,
    dictionary_config: DictionaryPipelineConfig,
}

struct Answer {
    triplets: Vec<SactTriplet>,
    warnings: ExtractionWarnings,
}

impl<'a> Extractor<'a> {
    pub fn new(gateway: &'a Gateway, model: &'a str, sampling: SamplingParams) -> Self {
        Self {
            gateway,
            model,
            sampling,
            dictionary_config: DictionaryPipelineConfig::default(),
        }
    }

    pub fn with_dictionary_config(mut self, config: DictionaryPipelineConfig) -> Self {
        self.dictionary_config = config;
        self
    }

    fn sampling_for(&self, thinking: bool) -> SamplingParams {
        self.sampling.with_max_tokens(if thinking {
            THINKING_MAX_TOKENS
        } else {
            DEFAULT_MAX_TOKENS
        })
    }

    fn ask(
        &self,
        template: TemplateId,
        payload: &str,
        thinking: bool,
    ) -> Result<Answer, GatewayError> {
        let request = ChatRequest::new(
            self.model,
            template,
            payload,
            thinking,
            self.sampling_for(thinking),
        )?;
        let result = self.gateway.complete(&request)?;
        let mut warnings = ExtractionWarnings::default();
        if result.is_truncated() {
            warnings.truncated += 1;
            return Ok(Answer {
                triplets: Vec::new(),
                warnings,
            });
        }
        let triplets = match parse_triplet_array(&result.answer_text) {
            Ok(parsed) => {
                warnings.dropped_elements += parsed.dropped as u32;
                parsed.triplets
            }
            Err(e) => {
                log::warn!("request {}: {e}", request.key());
                warnings.parse_failures += 1;
                Vec::new()
            }
        };
        Ok(Answer { triplets, warnings })
    }

    fn whole_note(
        &self,
        note: &ClinicalNote,
        strategy: Strategy,
        thinking: bool,
    ) -> Result<NoteExtraction, GatewayError> {
        let answer = self.ask(TemplateId::Extraction, &note.text, thinking)?;
        Ok(NoteExtraction {
            patient_id: note.patient_id.clone(),
            note_id: note.note_id.clone(),
            strategy,
            triplets: answer.triplets,
            warnings: answer.warnings,
        })
    }

    /// Raw note through the extraction prompt, thinking off.
    pub fn extract_baseline(&self, note: &ClinicalNote) -> Result<NoteExtraction, GatewayError> {
        self.whole_note(note, Strategy::Baseline, false)
    }

    /// Same prompt with thinking on, optionally followed by
    /// [`postprocess_triplets`].
    pub fn extract_thinking(
        &self,
        note: &ClinicalNote,
        postprocess: bool,
    ) -> Result<NoteExtraction, GatewayError> {
        let strategy = if postprocess {
            Strategy::ThinkingPost
        } else {
            Strategy::Thinking
        };
        let mut out = self.whole_note(note, strategy, true)?;
        if postprocess {
            out.triplets = postprocess_triplets(&out.triplets);
        }
        Ok(out)
    }

    /// Fine-tuned checkpoints served behind the configured model name; same
    /// request shape as the baseline.
    pub fn extract_finetuned(
        &self,
        note: &ClinicalNote,
        strategy: Strategy,
    ) -> Result<NoteExtraction, GatewayError> {
        debug_assert!(matches!(strategy, Strategy::SftModel | Strategy::DpoModel));
        self.whole_note(note, strategy, false)
    }

    /// Dictionary tagging, model verification of the tags, then relation
    /// extraction over a one-sentence window around each verified anchor.
    ///
    /// Notes without a dictionary hit make no model calls. Window outputs
    /// are concatenated without deduplication.
    pub fn extract_dictionary_pipeline(
        &self,
        note: &ClinicalNote,
        dict: &SactDictionary,
    ) -> Result<NoteExtraction, GatewayError> {
        let mut out = NoteExtraction::empty(&note.patient_id, &note.note_id, Strategy::Dictionary);
        let mut sentences = tag_note(note, dict);
        let anchors: Vec<usize> = (0..sentences.len())
            .filter(|&i| sentences[i].has_tags())
            .collect();
        if anchors.is_empty() {
            return Ok(out);
        }

        let batch: Vec<TaggedSentence> = anchors.iter().map(|&i| sentences[i].clone()).collect();
        let verified = verify_tags(self, &batch)?;
        out.warnings += verified.warnings;
        for (&i, s) in anchors.iter().zip(verified.sentences) {
            sentences[i] = s;
        }

        for window in select_candidate_windows(note, &sentences) {
            let answer = self.ask(
                TemplateId::SentenceRelation,
                &window.render(),
                self.dictionary_config.relation_thinking,
            )?;
            out.triplets.extend(answer.triplets);
            out.warnings += answer.warnings;
        }
        Ok(out)
    }

    /// Dispatches to the strategy's extraction path. `dict` is required for
    /// [`Strategy::Dictionary`]; ensembles are assembled by the caller.
    pub fn extract(
        &self,
        strategy: Strategy,
        note: &ClinicalNote,
        dict: Option<&SactDictionary>,
    ) -> Result<NoteExtraction, GatewayError> {
        match strategy {
            Strategy::Baseline => self.extract_baseline(note),
            Strategy::Thinking => self.extract_thinking(note, false),
            Strategy::ThinkingPost => self.extract_thinking(note, true),
            Strategy::SftModel | Strategy::DpoModel => self.extract_finetuned(note, strategy),
            Strategy::Dictionary => {
                let dict = dict.ok_or_else(|| {
                    GatewayError::InvalidRequest("dictionary strategy needs a dictionary".into())
                })?;
                self.extract_dictionary_pipeline(note, dict)
            }
            Strategy::Ensemble => Err(GatewayError::InvalidRequest(
                "ensemble is assembled from member strategies".into(),
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct VerifiedTags {
    pub sentences: Vec<TaggedSentence>,
    pub warnings: ExtractionWarnings,
}

fn blank_line() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\n[ \t]*\n").expect("static pattern"))
}

/// The request payload: tagged sentences separated by blank lines, wrapped
/// in one pair of braces.
pub(crate) fn verification_payload(batch: &[TaggedSentence]) -> String {
    let body: Vec<&str> = batch.iter().map(|s| s.tagged_text.as_str()).collect();
    format!("{{{}}}", body.join("\n\n"))
}

/// Sends one batch of tagged sentences through the verification prompt and
/// applies the model's tag edits.
///
/// The whole batch keeps its input tagging when the answer is not a single
/// brace-delimited block with one paragraph per input sentence. A single
/// sentence keeps its input tagging when its edited form is malformed or
/// changes the underlying text.
pub fn verify_tags(
    extractor: &Extractor<'_>,
    batch: &[TaggedSentence],
) -> Result<VerifiedTags, GatewayError> {
    let mut warnings = ExtractionWarnings::default();
    if batch.is_empty() {
        return Ok(VerifiedTags {
            sentences: Vec::new(),
            warnings,
        });
    }
    let thinking = extractor.dictionary_config.verify_thinking;
    let request = ChatRequest::new(
        extractor.model,
        TemplateId::TagVerification,
        verification_payload(batch),
        thinking,
        extractor.sampling_for(thinking),
    )?;
    let result = extractor.gateway.complete(&request)?;

    let fallback = |mut warnings: ExtractionWarnings| {
        warnings.verification_fallbacks += 1;
        VerifiedTags {
            sentences: batch.to_vec(),
            warnings,
        }
    };
    if result.is_truncated() {
        warnings.truncated += 1;
        return Ok(fallback(warnings));
    }
    let Some(paragraphs) = brace_paragraphs(&result.answer_text) else {
        log::warn!(
            "verification answer for request {} is not brace-delimited",
            request.key()
        );
        return Ok(fallback(warnings));
    };
    if paragraphs.len() != batch.len() {
        log::warn!(
            "verification answer has {} sentence(s), expected {}",
            paragraphs.len(),
            batch.len()
        );
        return Ok(fallback(warnings));
    }
    let sentences = batch
        .iter()
        .zip(paragraphs)
        .map(
            |(input, edited)| match TaggedSentence::from_tagged(input.span, edited) {
                Ok(s) if s.text == input.text => s,
                _ => {
                    warnings.verification_fallbacks += 1;
                    input.clone()
                }
            },
        )
        .collect();
    Ok(VerifiedTags {
        sentences,
        warnings,
    })
}

fn brace_paragraphs(answer: &str) -> Option<Vec<&str>> {
    let open = answer.find('{')?;
    let close = answer.rfind('}')?;
    if close <= open {
        return None;
    }
    let inner = answer[open + 1..close].trim();
    if inner.is_empty() {
        return None;
    }
    Some(blank_line().split(inner).map(str::trim).collect())
}
