//! Training-data builders: SFT examples from gold annotations and
//! recall-ranked preference pairs from sampled generations.

use std::collections::HashSet;
use std::fs;
use std::io::{self, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{qualified_note_id, ClinicalNote, PatientRecord};
use crate::gateway::{
    parse_triplet_array, render_prompt, serialize_triplet_array, ChatRequest, Gateway,
    GatewayError, SamplingParams, TemplateId,
};
use crate::scalar::Scalar;
use crate::triplet::SactTriplet;

pub const DEFAULT_CANDIDATES: usize = 8;

pub const SFT_FILE: &str = "sft.jsonl";
pub const DPO_FILE: &str = "dpo.jsonl";
pub const METADATA_FILE: &str = "metadata.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftExample {
    pub note_id: String,
    pub prompt_text: String,
    pub target_text: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub note_id: String,
    pub candidates: Vec<String>,
    pub k: usize,
}

impl CandidateSet {
    pub fn new(note_id: impl Into<String>, candidates: Vec<String>) -> Self {
        let k = candidates.len();
        Self {
            note_id: note_id.into(),
            candidates,
            k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PreferencePair {
    pub note_id: String,
    pub prompt_text: String,
    pub chosen: String,
    pub rejected: String,
    pub chosen_recall: f64,
    pub rejected_recall: f64,
}

/// One example per note that has a gold entry, empty gold included.
/// Notes of records without gold are skipped. Output is ordered by
/// qualified note id.
pub fn build_sft_dataset(records: &[PatientRecord]) -> Vec<SftExample> {
    let mut out: Vec<SftExample> = records
        .iter()
        .flat_map(|record| {
            record.notes.iter().filter_map(move |note| {
                let gold = record.gold_for(&note.note_id)?;
                Some(sft_example(note, gold))
            })
        })
        .collect();
    out.sort_by(|a, b| a.note_id.cmp(&b.note_id));
    out
}

fn sft_example(note: &ClinicalNote, gold: &[SactTriplet]) -> SftExample {
    SftExample {
        note_id: qualified_note_id(&note.patient_id, &note.note_id),
        prompt_text: render_prompt(TemplateId::Extraction, &note.text)
            .expect("notes are never empty"),
        target_text: serialize_triplet_array(gold),
    }
}

/// Fraction of distinct gold triplets reproduced by the candidate.
/// Unparseable text scores zero, as does an empty gold list.
pub fn candidate_recall<T: Scalar>(candidate_text: &str, gold: &[SactTriplet]) -> T {
    let gold: HashSet<_> = gold.iter().map(SactTriplet::canonical_key).collect();
    let Ok(parsed) = parse_triplet_array(candidate_text) else {
        return T::zero();
    };
    let predicted: HashSet<_> = parsed
        .triplets
        .iter()
        .map(SactTriplet::canonical_key)
        .collect();
    T::ratio(gold.intersection(&predicted).count(), gold.len())
}

/// Highest-recall candidate as chosen, lowest as rejected, first index on
/// ties. When those coincide textually the rejected side moves to the first
/// candidate with different text; `None` if there is none, or if gold is
/// empty.
pub fn select_pair(
    candidates: &CandidateSet,
    gold: &[SactTriplet],
    prompt_text: &str,
) -> Option<PreferencePair> {
    if gold.is_empty() || candidates.candidates.is_empty() {
        return None;
    }
    let recalls: Vec<f64> = candidates
        .candidates
        .iter()
        .map(|c| candidate_recall(c, gold))
        .collect();
    let mut best = 0;
    let mut worst = 0;
    for (i, &r) in recalls.iter().enumerate() {
        if r > recalls[best] {
            best = i;
        }
        if r < recalls[worst] {
            worst = i;
        }
    }
    let texts = &candidates.candidates;
    if texts[worst] == texts[best] {
        worst = texts.iter().position(|t| *t != texts[best])?;
    }
    Some(PreferencePair {
        note_id: candidates.note_id.clone(),
        prompt_text: prompt_text.to_string(),
        chosen: texts[best].clone(),
        rejected: texts[worst].clone(),
        chosen_recall: recalls[best],
        rejected_recall: recalls[worst],
    })
}

/// Draws `k` generations of the extraction prompt, thinking off. Each
/// sample carries its index so cached fixtures stay distinct.
pub fn sample_candidates(
    gateway: &Gateway,
    model: &str,
    sampling: SamplingParams,
    note: &ClinicalNote,
    k: usize,
) -> Result<CandidateSet, GatewayError> {
    let base = ChatRequest::new(
        model,
        TemplateId::Extraction,
        note.text.as_str(),
        false,
        sampling,
    )?;
    let candidates = (0..k as u32)
        .map(|i| {
            gateway
                .complete(&base.clone().with_sample_index(i))
                .map(|r| r.answer_text)
        })
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CandidateSet::new(
        qualified_note_id(&note.patient_id, &note.note_id),
        candidates,
    ))
}

/// Samples candidates for every note with non-empty gold and keeps the
/// notes that yield a distinct pair. Sampling runs in parallel; the result
/// is ordered by note id.
pub fn build_preference_pairs(
    gateway: &Gateway,
    model: &str,
    sampling: SamplingParams,
    records: &[PatientRecord],
    k: usize,
) -> Result<(Vec<CandidateSet>, Vec<PreferencePair>), GatewayError> {
    let work: Vec<(&ClinicalNote, &[SactTriplet])> = records
        .iter()
        .flat_map(|r| {
            r.notes.iter().filter_map(move |n| {
                r.gold_for(&n.note_id)
                    .filter(|g| !g.is_empty())
                    .map(|g| (n, g))
            })
        })
        .collect();
    let results = work
        .par_iter()
        .map(|(note, gold)| {
            let set = sample_candidates(gateway, model, sampling, note, k)?;
            let prompt =
                render_prompt(TemplateId::Extraction, &note.text).expect("notes are never empty");
            let pair = select_pair(&set, gold, &prompt);
            Ok((set, pair))
        })
        .collect::<Result<Vec<_>, GatewayError>>()?;
    let (mut sets, pairs): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let mut pairs: Vec<PreferencePair> = pairs.into_iter().flatten().collect();
    sets.sort_by(|a, b| a.note_id.cmp(&b.note_id));
    pairs.sort_by(|a, b| a.note_id.cmp(&b.note_id));
    Ok((sets, pairs))
}

#[derive(Serialize)]
struct SftLine<'a> {
    prompt: &'a str,
    response: &'a str,
}

#[derive(Serialize)]
struct DpoLine<'a> {
    prompt: &'a str,
    chosen: &'a str,
    rejected: &'a str,
}

fn write_jsonl<T: Serialize>(path: &Path, rows: impl Iterator<Item = T>) -> io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for row in rows {
        serde_json::to_writer(&mut w, &row)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

/// Writes `sft.jsonl` and `dpo.jsonl`, each ordered by note id. Both files
/// are always created.
pub fn emit_datasets(
    sft: &[SftExample],
    pairs: &[PreferencePair],
    out_dir: &Path,
) -> io::Result<()> {
    fs::create_dir_all(out_dir)?;
    let mut sft: Vec<&SftExample> = sft.iter().collect();
    sft.sort_by(|a, b| a.note_id.cmp(&b.note_id));
    let mut pairs: Vec<&PreferencePair> = pairs.iter().collect();
    pairs.sort_by(|a, b| a.note_id.cmp(&b.note_id));

    write_jsonl(
        &out_dir.join(SFT_FILE),
        sft.iter().map(|e| SftLine {
            prompt: &e.prompt_text,
            response: &e.target_text,
        }),
    )?;
    write_jsonl(
        &out_dir.join(DPO_FILE),
        pairs.iter().map(|p| DpoLine {
            prompt: &p.prompt_text,
            chosen: &p.chosen,
            rejected: &p.rejected,
        }),
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecommendedSchedule {
    pub sft_warmup_epochs: u32,
    pub dpo_epochs: u32,
    pub sft_epochs: u32,
    pub candidates_per_note: usize,
}

impl Default for RecommendedSchedule {
    fn default() -> Self {
        Self {
            sft_warmup_epochs: 5,
            dpo_epochs: 10,
            sft_epochs: 10,
            candidates_per_note: DEFAULT_CANDIDATES,
        }
    }
}

/// Sidecar describing how a dataset directory was produced.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMetadata {
    pub template: String,
    pub template_sha256: String,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub model: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub sampling: Option<SamplingParams>,
    pub sft_examples: usize,
    pub preference_pairs: usize,
    pub recommended: RecommendedSchedule,
}

impl DatasetMetadata {
    pub fn new(sft_examples: usize, preference_pairs: usize) -> Self {
        Self {
            template: TemplateId::Extraction.as_str().to_string(),
            template_sha256: TemplateId::Extraction.digest(),
            model: None,
            sampling: None,
            sft_examples,
            preference_pairs,
            recommended: RecommendedSchedule::default(),
        }
    }

    pub fn write(&self, out_dir: &Path) -> io::Result<()> {
        fs::create_dir_all(out_dir)?;
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(out_dir.join(METADATA_FILE), text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::triplet::Relation;

    fn t(s: &str) -> SactTriplet {
        SactTriplet::new(s, Relation::Contains, "2012").unwrap()
    }

    fn set(texts: &[&str]) -> CandidateSet {
        CandidateSet::new("p/n", texts.iter().map(|s| s.to_string()).collect())
    }

    #[test]
    fn recall_cases() {
        let gold = [t("a"), t("b"), t("c")];
        let all = serialize_triplet_array(&gold);
        assert_eq!(candidate_recall::<f64>(&all, &gold), 1.0);
        assert_eq!(candidate_recall::<f64>("no json", &gold), 0.0);
        let partial = serialize_triplet_array(&[t("A"), t("c"), t("zzz")]);
        assert_eq!(
            candidate_recall::<num_rational::Rational64>(&partial, &gold),
            num_rational::Rational64::new(2, 3)
        );
    }

    #[test]
    fn pair_by_argmax_argmin() {
        let gold = [t("a"), t("b")];
        let half = serialize_triplet_array(&[t("a")]);
        let full = serialize_triplet_array(&gold);
        let pair = select_pair(&set(&[&half, &full, "[]", "[]"]), &gold, "P").unwrap();
        assert_eq!(pair.chosen, full);
        assert_eq!(pair.rejected, "[]");
        assert_eq!((pair.chosen_recall, pair.rejected_recall), (1.0, 0.0));
    }

    #[test]
    fn distinctness() {
        let gold = [t("a")];
        assert!(select_pair(&set(&["[]", "[]", "[]"]), &gold, "P").is_none());
        let pair = select_pair(&set(&["[]", "[ ]", "x"]), &gold, "P").unwrap();
        assert_eq!(
            (pair.chosen.as_str(), pair.rejected.as_str()),
            ("[]", "[ ]")
        );
        assert!(select_pair(&set(&["[]", "x"]), &[], "P").is_none());
    }

    #[test]
    fn emit_creates_both_files() {
        let dir = tempfile::tempdir().unwrap();
        let sft = vec![
            SftExample {
                note_id: "b".into(),
                prompt_text: "p2".into(),
                target_text: "[]".into(),
            },
            SftExample {
                note_id: "a".into(),
                prompt_text: "p1".into(),
                target_text: "[]".into(),
            },
        ];
        emit_datasets(&sft, &[], dir.path()).unwrap();
        let text = fs::read_to_string(dir.path().join(SFT_FILE)).unwrap();
        assert_eq!(
            text,
            "{\"prompt\":\"p1\",\"response\":\"[]\"}\n{\"prompt\":\"p2\",\"response\":\"[]\"}\n"
        );
        assert_eq!(fs::read_to_string(dir.path().join(DPO_FILE)).unwrap(), "");
    }
}
