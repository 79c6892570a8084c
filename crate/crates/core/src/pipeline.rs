//! End-to-end runs: corpus → extraction → normalization → timelines →
//! evaluation, with every intermediate layer written to disk.
//!
//! Each stage reads and writes plain files, so a run can be resumed from
//! `extractions.json` (see [`aggregate_extractions`]) or re-scored from two
//! timeline files without touching the model again.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{
    load_corpus, qualified_note_id, CancerType, ClinicalNote, CorpusError, PatientRecord,
};
use crate::dictionary::{
    build_dictionary, shipped_term_list, SactDictionary, SourceKind, TermSource,
};
use crate::eval::{note_micro, timeline_f1, EvalReport};
use crate::extraction::{
    ensemble_concat, DictionaryPipelineConfig, ExtractionWarnings, Extractor, NoteExtraction,
    Strategy,
};
use crate::gateway::{
    EndpointProfile, Gateway, GatewayError, HttpBackend, MockBackend, SamplingParams, TemplateId,
};
use crate::timeline::{
    aggregate, normalize_triplets, render_timelines, DropHistogram, NormalizedTriplet,
    PatientTimeline,
};
use crate::timenorm::NormalizeOptions;
use crate::triplet::SactTriplet;

pub const EXTRACTIONS_FILE: &str = "extractions.json";
pub const NORMALIZED_FILE: &str = "normalized.json";
pub const TIMELINES_FILE: &str = "timelines.json";
pub const GOLD_TIMELINES_FILE: &str = "gold_timelines.json";
pub const MANIFEST_FILE: &str = "manifest.json";
pub const METRICS_JSON_FILE: &str = "metrics.json";
pub const METRICS_TEXT_FILE: &str = "metrics.txt";

const MOCK_MODEL: &str = "mock";

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error(transparent)]
    Gateway(#[from] GatewayError),
}

impl PipelineError {
    pub fn is_config(&self) -> bool {
        matches!(self, PipelineError::Config(_))
    }

    fn io(path: &Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn config_err<T>(msg: impl Into<String>) -> Result<T, PipelineError> {
    Err(PipelineError::Config(msg.into()))
}

/// Where model calls go: a live endpoint or a fixture directory, never both.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BackendConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<EndpointProfile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mock_fixtures: Option<PathBuf>,
}

impl BackendConfig {
    fn validate(&self, what: &str) -> Result<(), PipelineError> {
        match (&self.endpoint, &self.mock_fixtures) {
            (Some(_), Some(_)) => config_err(format!(
                "{what}: `endpoint` and `mock_fixtures` are mutually exclusive"
            )),
            (None, None) => config_err(format!("{what}: set either `endpoint` or `mock_fixtures`")),
            _ => Ok(()),
        }
    }

    pub fn model(&self) -> &str {
        self.endpoint
            .as_ref()
            .map_or(MOCK_MODEL, |e| e.model.as_str())
    }

    pub fn gateway(&self, max_in_flight: usize) -> Result<Gateway, PipelineError> {
        let gateway = match (&self.endpoint, &self.mock_fixtures) {
            (Some(profile), None) => {
                Gateway::new(HttpBackend::new(profile.clone()).map_err(GatewayError::Backend)?)
                    .with_think_delimiters(profile.think.clone())
            }
            (None, Some(dir)) => Gateway::new(MockBackend::from_dir(dir)),
            _ => unreachable!("validated"),
        };
        Ok(gateway.with_max_in_flight(max_in_flight))
    }

    fn resolve(&mut self, base: &Path) {
        if let Some(dir) = &mut self.mock_fixtures {
            *dir = base.join(&*dir);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EnsembleMember {
    pub strategy: Strategy,
    #[serde(flatten)]
    pub backend: BackendConfig,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DictionaryFile {
    pub path: PathBuf,
    pub kind: SourceKind,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DictionarySettings {
    pub include_shipped: bool,
    pub files: Vec<DictionaryFile>,
    pub verify_thinking: bool,
    pub relation_thinking: bool,
}

impl Default for DictionarySettings {
    fn default() -> Self {
        let pipeline = DictionaryPipelineConfig::default();
        Self {
            include_shipped: true,
            files: Vec::new(),
            verify_thinking: pipeline.verify_thinking,
            relation_thinking: pipeline.relation_thinking,
        }
    }
}

impl DictionarySettings {
    fn pipeline_config(&self) -> DictionaryPipelineConfig {
        DictionaryPipelineConfig {
            verify_thinking: self.verify_thinking,
            relation_thinking: self.relation_thinking,
        }
    }

    pub fn build(&self, cancer_type: CancerType) -> Result<SactDictionary, PipelineError> {
        let mut sources = Vec::new();
        if self.include_shipped {
            sources.push(TermSource::parse(
                SourceKind::Curated,
                shipped_term_list(cancer_type),
            ));
        }
        for file in &self.files {
            sources.push(
                TermSource::from_file(file.kind, &file.path)
                    .map_err(PipelineError::io(&file.path))?,
            );
        }
        if sources.is_empty() {
            return config_err("dictionary has no term sources");
        }
        Ok(build_dictionary(cancer_type, &sources))
    }
}

fn default_max_in_flight() -> usize {
    4
}

/// One run, read from a TOML file. Relative paths are resolved against the
/// file's directory.
///
/// ```toml
/// corpus_root = "corpus"
/// output_dir = "out"
/// strategy = "baseline"
/// cancer_type = "breast"
/// mock_fixtures = "mock"
///
/// [sampling]
/// temperature = 0.6
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus_root: PathBuf,
    pub output_dir: PathBuf,
    pub strategy: Strategy,
    pub cancer_type: CancerType,
    #[serde(flatten)]
    pub backend: BackendConfig,
    #[serde(default)]
    pub sampling: SamplingParams,
    #[serde(default = "default_max_in_flight")]
    pub max_in_flight: usize,
    /// Worker threads for the per-note stages; rayon's default when unset.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
    #[serde(default)]
    pub strict_iso_fixups: bool,
    #[serde(default)]
    pub dictionary: DictionarySettings,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub ensemble: Vec<EnsembleMember>,
}

impl RunConfig {
    pub fn from_toml(text: &str, base_dir: &Path) -> Result<Self, PipelineError> {
        let mut config: RunConfig =
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        config.resolve(base_dir);
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text, path.parent().unwrap_or(Path::new(".")))
    }

    fn resolve(&mut self, base: &Path) {
        self.corpus_root = base.join(&self.corpus_root);
        self.output_dir = base.join(&self.output_dir);
        self.backend.resolve(base);
        for member in &mut self.ensemble {
            member.backend.resolve(base);
        }
        for file in &mut self.dictionary.files {
            file.path = base.join(&file.path);
        }
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        self.sampling.validate()?;
        if self.max_in_flight == 0 {
            return config_err("max_in_flight must be at least 1");
        }
        if self.threads == Some(0) {
            return config_err("threads must be at least 1");
        }
        if self.strategy == Strategy::Ensemble {
            if self.ensemble.is_empty() {
                return config_err("ensemble strategy needs at least one [[ensemble]] member");
            }
            if self.backend != BackendConfig::default() {
                return config_err("ensemble runs configure backends per member");
            }
            for (i, member) in self.ensemble.iter().enumerate() {
                if member.strategy == Strategy::Ensemble {
                    return config_err(format!("ensemble member {i} cannot itself be an ensemble"));
                }
                member.backend.validate(&format!("ensemble member {i}"))?;
            }
            Ok(())
        } else {
            if !self.ensemble.is_empty() {
                return config_err("[[ensemble]] members given but strategy is not `ensemble`");
            }
            self.backend.validate("run")
        }
    }

    pub fn normalize_options(&self) -> NormalizeOptions {
        NormalizeOptions {
            strict_iso_fixups: self.strict_iso_fixups,
        }
    }

    fn members(&self) -> Vec<(Strategy, &BackendConfig)> {
        if self.strategy == Strategy::Ensemble {
            self.ensemble
                .iter()
                .map(|m| (m.strategy, &m.backend))
                .collect()
        } else {
            vec![(self.strategy, &self.backend)]
        }
    }

    fn needs_dictionary(&self) -> bool {
        self.members()
            .iter()
            .any(|(s, _)| *s == Strategy::Dictionary)
    }

    /// Runs `f` on a pool sized by `threads`, or on the global pool.
    pub fn install<R: Send>(&self, f: impl FnOnce() -> R + Send) -> Result<R, PipelineError> {
        match self.threads {
            Some(n) => {
                let pool = rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build()
                    .map_err(|e| PipelineError::Config(format!("thread pool: {e}")))?;
                Ok(pool.install(f))
            }
            None => Ok(f()),
        }
    }
}

/// One note's raw extraction plus the document time needed to normalize it
/// later.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractedNote {
    #[serde(flatten)]
    pub extraction: NoteExtraction,
    pub doctime: Option<NaiveDate>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionFile {
    pub strategy: Strategy,
    pub models: Vec<String>,
    pub notes: Vec<ExtractedNote>,
}

impl ExtractionFile {
    pub fn warnings(&self) -> ExtractionWarnings {
        let mut total = ExtractionWarnings::default();
        for n in &self.notes {
            total += n.extraction.warnings;
        }
        total
    }

    pub fn write(&self, path: &Path) -> Result<(), PipelineError> {
        write_json(path, self)
    }

    pub fn read(path: &Path) -> Result<Self, PipelineError> {
        read_json(path)
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), PipelineError> {
    let mut text = serde_json::to_string_pretty(value).expect("plain data serializes");
    text.push('\n');
    fs::write(path, text).map_err(PipelineError::io(path))
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, PipelineError> {
    let text = fs::read_to_string(path).map_err(PipelineError::io(path))?;
    serde_json::from_str(&text).map_err(|e| PipelineError::Format {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn extract_one(
    extractor: &Extractor<'_>,
    strategy: Strategy,
    note: &ClinicalNote,
    dict: Option<&SactDictionary>,
) -> NoteExtraction {
    extractor.extract(strategy, note, dict).unwrap_or_else(|e| {
        log::warn!(
            "{}: {strategy} extraction failed: {e}",
            qualified_note_id(&note.patient_id, &note.note_id)
        );
        let mut out = NoteExtraction::empty(&note.patient_id, &note.note_id, strategy);
        out.warnings.failed_calls += 1;
        out
    })
}

/// Runs the configured strategy over every note. Notes are processed in
/// parallel and returned in corpus order. A failed model call leaves that
/// note (or ensemble member) empty and is counted in `failed_calls`.
pub fn extract_records(
    config: &RunConfig,
    records: &[PatientRecord],
) -> Result<ExtractionFile, PipelineError> {
    let members = config.members();
    let gateways = members
        .iter()
        .map(|(_, b)| b.gateway(config.max_in_flight))
        .collect::<Result<Vec<_>, _>>()?;
    let extractors: Vec<(Strategy, Extractor<'_>)> = members
        .iter()
        .zip(&gateways)
        .map(|((strategy, backend), gateway)| {
            let extractor = Extractor::new(gateway, backend.model(), config.sampling)
                .with_dictionary_config(config.dictionary.pipeline_config());
            (*strategy, extractor)
        })
        .collect();
    let dict = if config.needs_dictionary() {
        Some(config.dictionary.build(config.cancer_type)?)
    } else {
        None
    };

    let notes: Vec<&ClinicalNote> = records.iter().flat_map(|r| &r.notes).collect();
    let extracted = notes
        .par_iter()
        .map(|note| {
            let extraction = if config.strategy == Strategy::Ensemble {
                let parts: Vec<NoteExtraction> = extractors
                    .iter()
                    .map(|(s, x)| extract_one(x, *s, note, dict.as_ref()))
                    .collect();
                ensemble_concat(&note.patient_id, &note.note_id, &parts)
                    .expect("members extract the same note")
            } else {
                let (s, x) = &extractors[0];
                extract_one(x, *s, note, dict.as_ref())
            };
            ExtractedNote {
                extraction,
                doctime: note.doctime,
            }
        })
        .collect();

    Ok(ExtractionFile {
        strategy: config.strategy,
        models: members.iter().map(|(_, b)| b.model().to_string()).collect(),
        notes: extracted,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NormalizedNote {
    pub patient_id: String,
    pub note_id: String,
    /// `[SACT, relation, ISO value]` rows in extraction order.
    pub triplets: Vec<[String; 3]>,
    pub drops: DropHistogram,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Aggregated {
    pub normalized: Vec<NormalizedNote>,
    pub timelines: Vec<PatientTimeline>,
    pub drops: DropHistogram,
}

fn normalize_note(
    patient_id: &str,
    note_id: &str,
    doctime: Option<NaiveDate>,
    triplets: &[SactTriplet],
    options: NormalizeOptions,
) -> (NormalizedNote, Vec<NormalizedTriplet>) {
    let shell = ClinicalNote {
        patient_id: patient_id.to_string(),
        note_id: note_id.to_string(),
        text: String::new(),
        doctime,
    };
    let outcome = normalize_triplets(triplets, &shell, options);
    let rows = outcome
        .triplets
        .iter()
        .map(|t| {
            [
                t.sact_surface().to_string(),
                t.relation().as_str().to_string(),
                t.time().value().to_string(),
            ]
        })
        .collect();
    let note = NormalizedNote {
        patient_id: patient_id.to_string(),
        note_id: note_id.to_string(),
        triplets: rows,
        drops: outcome.drops,
    };
    (note, outcome.triplets)
}

fn group_by_patient(notes: Vec<(NormalizedNote, Vec<NormalizedTriplet>)>) -> Aggregated {
    let mut drops = DropHistogram::new();
    let mut per_patient: BTreeMap<String, Vec<NormalizedTriplet>> = BTreeMap::new();
    let mut normalized = Vec::with_capacity(notes.len());
    for (note, events) in notes {
        for (reason, n) in &note.drops {
            *drops.entry(*reason).or_default() += n;
        }
        per_patient
            .entry(note.patient_id.clone())
            .or_default()
            .extend(events);
        normalized.push(note);
    }
    let timelines = per_patient
        .into_iter()
        .map(|(patient, events)| aggregate(&patient, events))
        .collect();
    Aggregated {
        normalized,
        timelines,
        drops,
    }
}

/// Normalizes every extracted note and builds one timeline per patient,
/// including patients whose notes produced nothing.
pub fn aggregate_extractions(file: &ExtractionFile, options: NormalizeOptions) -> Aggregated {
    let notes = file
        .notes
        .par_iter()
        .map(|n| {
            let e = &n.extraction;
            normalize_note(&e.patient_id, &e.note_id, n.doctime, &e.triplets, options)
        })
        .collect();
    group_by_patient(notes)
}

/// Gold timelines for every patient that has annotations, normalized the
/// same way as predictions.
pub fn gold_timelines(records: &[PatientRecord], options: NormalizeOptions) -> Aggregated {
    let notes = records
        .iter()
        .filter(|r| r.gold.is_some())
        .flat_map(|r| {
            r.notes.iter().map(move |n| {
                let gold = r.gold_for(&n.note_id).unwrap_or_default();
                normalize_note(&n.patient_id, &n.note_id, n.doctime, gold, options)
            })
        })
        .collect();
    group_by_patient(notes)
}

/// Scores predictions against the annotated part of the corpus. `None` when
/// nothing is annotated.
pub fn evaluate_run(
    records: &[PatientRecord],
    extractions: &ExtractionFile,
    predicted: &[PatientTimeline],
    gold: &[PatientTimeline],
) -> Option<EvalReport> {
    let annotated: Vec<&PatientRecord> = records.iter().filter(|r| r.gold.is_some()).collect();
    if annotated.is_empty() {
        return None;
    }
    let mut gold_notes = BTreeMap::new();
    for r in &annotated {
        for g in r.gold.iter().flatten() {
            gold_notes.insert(
                qualified_note_id(&r.patient_id, &g.note_id),
                g.triplets.clone(),
            );
        }
    }
    let pred_notes: BTreeMap<String, Vec<SactTriplet>> = extractions
        .notes
        .iter()
        .map(|n| {
            let e = &n.extraction;
            (
                qualified_note_id(&e.patient_id, &e.note_id),
                e.triplets.clone(),
            )
        })
        .filter(|(id, _)| gold_notes.contains_key(id))
        .collect();
    let universe: Vec<String> = annotated.iter().map(|r| r.patient_id.clone()).collect();
    let note_level = note_micro(&pred_notes, &gold_notes);
    let timeline = timeline_f1(predicted, gold, &universe).expect("universe is non-empty");
    Some(EvalReport::new(Some(note_level), Some(timeline)))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub strategy: Strategy,
    pub cancer_type: CancerType,
    pub models: Vec<String>,
    pub template_sha256: BTreeMap<String, String>,
    pub sampling: SamplingParams,
    pub strict_iso_fixups: bool,
    pub patients: usize,
    pub notes: usize,
    pub raw_triplets: usize,
    pub normalized_triplets: usize,
    pub timeline_events: usize,
    pub drops: DropHistogram,
    pub warnings: ExtractionWarnings,
    pub evaluated: bool,
    pub started_at: String,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub manifest: RunManifest,
    pub metrics: Option<EvalReport>,
    pub output_dir: PathBuf,
}

/// The full pipeline for one configuration. Writes extractions, normalized
/// triplets, timelines and a manifest to the output directory, plus gold
/// timelines and metrics when the corpus carries annotations.
pub fn run_pipeline(config: &RunConfig) -> Result<RunReport, PipelineError> {
    config.validate()?;
    config.install(|| run_inner(config))?
}

fn run_inner(config: &RunConfig) -> Result<RunReport, PipelineError> {
    let started_at = chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true);
    let clock = Instant::now();
    let out = &config.output_dir;
    fs::create_dir_all(out).map_err(PipelineError::io(out))?;

    let records = load_corpus(&config.corpus_root, config.cancer_type)?;
    log::info!(
        "loaded {} patients, {} notes",
        records.len(),
        records.iter().map(|r| r.notes.len()).sum::<usize>()
    );

    let extractions = extract_records(config, &records)?;
    extractions.write(&out.join(EXTRACTIONS_FILE))?;

    let options = config.normalize_options();
    let aggregated = aggregate_extractions(&extractions, options);
    write_json(&out.join(NORMALIZED_FILE), &aggregated.normalized)?;
    let timelines_path = out.join(TIMELINES_FILE);
    fs::write(&timelines_path, render_timelines(&aggregated.timelines))
        .map_err(PipelineError::io(&timelines_path))?;

    let gold = gold_timelines(&records, options);
    let metrics = evaluate_run(
        &records,
        &extractions,
        &aggregated.timelines,
        &gold.timelines,
    );
    if let Some(report) = &metrics {
        let gold_path = out.join(GOLD_TIMELINES_FILE);
        fs::write(&gold_path, render_timelines(&gold.timelines))
            .map_err(PipelineError::io(&gold_path))?;
        let json_path = out.join(METRICS_JSON_FILE);
        fs::write(&json_path, report.to_json()).map_err(PipelineError::io(&json_path))?;
        let text_path = out.join(METRICS_TEXT_FILE);
        fs::write(&text_path, report.table()).map_err(PipelineError::io(&text_path))?;
    }

    let manifest = RunManifest {
        strategy: config.strategy,
        cancer_type: config.cancer_type,
        models: extractions.models.clone(),
        template_sha256: TemplateId::ALL
            .iter()
            .map(|t| (t.as_str().to_string(), t.digest()))
            .collect(),
        sampling: config.sampling,
        strict_iso_fixups: config.strict_iso_fixups,
        patients: records.len(),
        notes: extractions.notes.len(),
        raw_triplets: extractions
            .notes
            .iter()
            .map(|n| n.extraction.triplets.len())
            .sum(),
        normalized_triplets: aggregated.normalized.iter().map(|n| n.triplets.len()).sum(),
        timeline_events: aggregated.timelines.iter().map(PatientTimeline::len).sum(),
        drops: aggregated.drops,
        warnings: extractions.warnings(),
        evaluated: metrics.is_some(),
        started_at,
        elapsed_ms: clock.elapsed().as_millis() as u64,
    };
    write_json(&out.join(MANIFEST_FILE), &manifest)?;
    Ok(RunReport {
        manifest,
        metrics,
        output_dir: out.clone(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> Result<RunConfig, PipelineError> {
        RunConfig::from_toml(text, Path::new("/base"))
    }

    const BASIC: &str = r#"
corpus_root = "corpus"
output_dir = "out"
strategy = "baseline"
cancer_type = "breast"
mock_fixtures = "mock"
"#;

    #[test]
    fn minimal_config_resolves_paths() {
        let c = parse(BASIC).unwrap();
        assert_eq!(c.corpus_root, Path::new("/base/corpus"));
        assert_eq!(
            c.backend.mock_fixtures.as_deref(),
            Some(Path::new("/base/mock"))
        );
        assert_eq!(c.sampling, SamplingParams::default());
        assert_eq!(c.max_in_flight, 4);
    }

    #[test]
    fn mock_and_endpoint_conflict() {
        let text = format!(
            "{BASIC}\n[endpoint]\nurl = \"http://localhost:8000/v1/chat/completions\"\nmodel = \"m\"\n"
        );
        let err = parse(&text).unwrap_err();
        assert!(err.is_config(), "{err}");
        assert!(err.to_string().contains("mutually exclusive"));
    }

    #[test]
    fn partial_sampling_table() {
        let c = parse(&format!("{BASIC}\n[sampling]\ntemperature = 0.0\n")).unwrap();
        assert_eq!(c.sampling.temperature, 0.0);
        assert_eq!(c.sampling.top_k, 20);
    }

    #[test]
    fn ensemble_rules() {
        let base = BASIC.replace("strategy = \"baseline\"", "strategy = \"ensemble\"");
        assert!(parse(&base).unwrap_err().is_config());
        let no_top = base.replace("mock_fixtures = \"mock\"\n", "");
        let ok = format!(
            "{no_top}\n[[ensemble]]\nstrategy = \"sft_model\"\nmock_fixtures = \"a\"\n\n[[ensemble]]\nstrategy = \"dictionary\"\nmock_fixtures = \"b\"\n"
        );
        let c = parse(&ok).unwrap();
        assert_eq!(c.ensemble.len(), 2);
        assert!(c.needs_dictionary());
        let nested =
            format!("{no_top}\n[[ensemble]]\nstrategy = \"ensemble\"\nmock_fixtures = \"a\"\n");
        assert!(parse(&nested).unwrap_err().is_config());
    }

    #[test]
    fn unknown_keys_rejected() {
        assert!(parse(&format!("{BASIC}\nbogus = 1\n"))
            .unwrap_err()
            .is_config());
    }
}
