use std::collections::BTreeMap;
use std::fs;
use std::io::{self, BufRead, Read, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::NaiveDate;
use clap::{Args, Parser, Subcommand, ValueEnum};

use sactline::corpus::{load_corpus, qualified_note_id, CancerType, PatientRecord};
use sactline::dpo_prep::{
    build_preference_pairs, build_sft_dataset, emit_datasets, DatasetMetadata, DEFAULT_CANDIDATES,
};
use sactline::eval::{note_micro, timeline_f1, EvalReport};
use sactline::extraction::Strategy;
use sactline::gateway::{request_key, TemplateId};
use sactline::pipeline::{
    aggregate_extractions, extract_records, gold_timelines, run_pipeline, ExtractionFile,
    PipelineError, RunConfig, EXTRACTIONS_FILE,
};
use sactline::timeline::{read_timelines, render_timelines, PatientTimeline};
use sactline::timenorm::{normalize, Anchor, NormalizeOptions};
use sactline::SactTriplet;

#[derive(Parser)]
#[command(
    name = "sactline",
    version,
    about = "SACT timeline extraction from clinical notes"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured extraction strategy and write extractions.json.
    Extract(RunArgs),
    /// Normalize an extractions file and write patient timelines.
    Aggregate(AggregateArgs),
    /// Score predictions against gold annotations.
    Evaluate(EvaluateArgs),
    /// Normalize `expression<TAB>anchor` lines from stdin.
    Timenorm(TimenormArgs),
    /// Write SFT examples for every annotated note.
    SftPrep(SftPrepArgs),
    /// Sample candidates and write recall-ranked preference pairs.
    DpoPrep(DpoPrepArgs),
    /// Full pipeline: extract, aggregate, evaluate.
    Run(RunArgs),
    /// Print the mock-fixture key for a payload read from stdin.
    FixtureKey(FixtureKeyArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML run configuration.
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long)]
    output_dir: Option<PathBuf>,
    #[arg(long)]
    strategy: Option<Strategy>,
    #[arg(long)]
    threads: Option<usize>,
}

impl RunArgs {
    fn load(&self) -> Result<RunConfig, PipelineError> {
        let mut config = RunConfig::load(&self.config)?;
        if let Some(dir) = &self.output_dir {
            config.output_dir = dir.clone();
        }
        if let Some(strategy) = self.strategy {
            config.strategy = strategy;
        }
        if self.threads.is_some() {
            config.threads = self.threads;
        }
        config.validate()?;
        Ok(config)
    }
}

#[derive(Args)]
struct AggregateArgs {
    #[arg(long)]
    extractions: PathBuf,
    /// Timeline file to write; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write per-note normalized triplets here.
    #[arg(long)]
    normalized: Option<PathBuf>,
    #[arg(long)]
    strict_iso_fixups: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Level {
    Note,
    Timeline,
}

#[derive(Args)]
struct EvaluateArgs {
    #[arg(long, value_enum, default_value = "timeline")]
    level: Level,
    /// Timeline file, or for note level an extractions file or a
    /// `{"patient/note": [[sact, relation, time], ...]}` map.
    #[arg(long)]
    pred: PathBuf,
    /// Same formats as --pred, or a corpus directory with gold.json files.
    #[arg(long)]
    gold: PathBuf,
    /// Patient ids to score, one per line. Defaults to the gold patients.
    #[arg(long)]
    universe: Option<PathBuf>,
    /// Cancer type when --gold is a corpus directory.
    #[arg(long, default_value = "breast")]
    cancer_type: CancerType,
    #[arg(long)]
    strict_iso_fixups: bool,
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct TimenormArgs {
    #[arg(long)]
    strict_iso_fixups: bool,
}

#[derive(Args)]
struct SftPrepArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long, default_value = "breast")]
    cancer_type: CancerType,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct DpoPrepArgs {
    #[arg(long, short)]
    config: PathBuf,
    #[arg(long)]
    out: PathBuf,
    #[arg(short, long, default_value_t = DEFAULT_CANDIDATES)]
    k: usize,
}

#[derive(Args)]
struct FixtureKeyArgs {
    #[arg(long, default_value = "extraction")]
    template: TemplateId,
    #[arg(long)]
    thinking: bool,
    #[arg(long)]
    sample_index: Option<u32>,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            let config = err.chain().any(|e| {
                e.downcast_ref::<PipelineError>()
                    .is_some_and(PipelineError::is_config)
            });
            ExitCode::from(if config { 2 } else { 1 })
        }
    }
}

fn dispatch(command: Command) -> Result<()> {
    match command {
        Command::Extract(args) => extract(&args),
        Command::Aggregate(args) => aggregate_cmd(&args),
        Command::Evaluate(args) => evaluate(&args),
        Command::Timenorm(args) => timenorm(&args),
        Command::SftPrep(args) => sft_prep(&args),
        Command::DpoPrep(args) => dpo_prep(&args),
        Command::Run(args) => run(&args),
        Command::FixtureKey(args) => fixture_key(&args),
    }
}

fn extract(args: &RunArgs) -> Result<()> {
    let config = args.load()?;
    let file = config.install(|| -> Result<ExtractionFile> {
        let records = load_corpus(&config.corpus_root, config.cancer_type)?;
        Ok(extract_records(&config, &records)?)
    })??;
    fs::create_dir_all(&config.output_dir)
        .with_context(|| format!("creating {}", config.output_dir.display()))?;
    let path = config.output_dir.join(EXTRACTIONS_FILE);
    file.write(&path)?;
    let w = file.warnings();
    eprintln!(
        "{} notes extracted ({} warnings) -> {}",
        file.notes.len(),
        w.total(),
        path.display()
    );
    Ok(())
}

fn write_or_print(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => Ok(io::stdout().write_all(text.as_bytes())?),
    }
}

fn aggregate_cmd(args: &AggregateArgs) -> Result<()> {
    let file = ExtractionFile::read(&args.extractions)?;
    let options = NormalizeOptions {
        strict_iso_fixups: args.strict_iso_fixups,
    };
    let aggregated = aggregate_extractions(&file, options);
    if let Some(path) = &args.normalized {
        let text = serde_json::to_string_pretty(&aggregated.normalized)? + "\n";
        fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    }
    write_or_print(
        args.out.as_deref(),
        &render_timelines(&aggregated.timelines),
    )?;
    for (reason, n) in &aggregated.drops {
        eprintln!("dropped {n} triplet(s): {}", reason.as_str());
    }
    Ok(())
}

fn load_universe(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(text
        .lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(String::from)
        .collect())
}

type NoteMap = BTreeMap<String, Vec<SactTriplet>>;

fn note_map_from_file(path: &Path) -> Result<NoteMap> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if let Ok(file) = serde_json::from_str::<ExtractionFile>(&text) {
        return Ok(file
            .notes
            .into_iter()
            .map(|n| {
                let e = n.extraction;
                (qualified_note_id(&e.patient_id, &e.note_id), e.triplets)
            })
            .collect());
    }
    serde_json::from_str(&text)
        .with_context(|| format!("{}: not a note-level file", path.display()))
}

fn gold_note_map(records: &[PatientRecord]) -> NoteMap {
    records
        .iter()
        .flat_map(|r| {
            r.gold.iter().flatten().map(move |g| {
                (
                    qualified_note_id(&r.patient_id, &g.note_id),
                    g.triplets.clone(),
                )
            })
        })
        .collect()
}

fn evaluate(args: &EvaluateArgs) -> Result<()> {
    let options = NormalizeOptions {
        strict_iso_fixups: args.strict_iso_fixups,
    };
    let gold_records = if args.gold.is_dir() {
        Some(load_corpus(&args.gold, args.cancer_type)?)
    } else {
        None
    };
    let report = match args.level {
        Level::Note => {
            let pred = note_map_from_file(&args.pred)?;
            let gold = match &gold_records {
                Some(records) => gold_note_map(records),
                None => note_map_from_file(&args.gold)?,
            };
            let pred = pred
                .into_iter()
                .filter(|(k, _)| gold.contains_key(k))
                .collect();
            EvalReport::new(Some(note_micro(&pred, &gold)), None)
        }
        Level::Timeline => {
            let pred = read_timelines(&args.pred)?;
            let gold: Vec<PatientTimeline> = match &gold_records {
                Some(records) => gold_timelines(records, options).timelines,
                None => read_timelines(&args.gold)?,
            };
            let universe = match &args.universe {
                Some(path) => load_universe(path)?,
                None => gold.iter().map(|t| t.patient_id.clone()).collect(),
            };
            let metrics = timeline_f1(&pred, &gold, &universe)?;
            EvalReport::new(None, Some(metrics))
        }
    };
    let text = if args.json {
        report.to_json()
    } else {
        report.table()
    };
    io::stdout().write_all(text.as_bytes())?;
    Ok(())
}

fn timenorm(args: &TimenormArgs) -> Result<()> {
    let options = NormalizeOptions {
        strict_iso_fixups: args.strict_iso_fixups,
    };
    let stdin = io::stdin();
    let mut out = io::BufWriter::new(io::stdout().lock());
    for (lineno, line) in stdin.lock().lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let (expr, anchor) = match line.split_once('\t') {
            Some((e, a)) if !a.trim().is_empty() => {
                let date = NaiveDate::parse_from_str(a.trim(), "%Y-%m-%d")
                    .with_context(|| format!("line {}: bad anchor {a:?}", lineno + 1))?;
                (e, Some(Anchor(date)))
            }
            Some((e, _)) => (e, None),
            None => (line.as_str(), None),
        };
        match normalize(expr, anchor, options) {
            Ok(t) => writeln!(out, "{t}")?,
            Err(e) => writeln!(out, "!{}", e.reason.as_str())?,
        }
    }
    Ok(())
}

fn sft_prep(args: &SftPrepArgs) -> Result<()> {
    let records = load_corpus(&args.corpus, args.cancer_type)?;
    if records.iter().all(|r| r.gold.is_none()) {
        bail!("{}: no gold annotations found", args.corpus.display());
    }
    let sft = build_sft_dataset(&records);
    emit_datasets(&sft, &[], &args.out)?;
    DatasetMetadata::new(sft.len(), 0).write(&args.out)?;
    eprintln!("{} SFT examples -> {}", sft.len(), args.out.display());
    Ok(())
}

fn dpo_prep(args: &DpoPrepArgs) -> Result<()> {
    if args.k == 0 {
        return Err(PipelineError::Config("k must be at least 1".into()).into());
    }
    let config = RunConfig::load(&args.config)?;
    if config.strategy == Strategy::Ensemble {
        return Err(PipelineError::Config("dpo-prep samples from a single backend".into()).into());
    }
    let records = load_corpus(&config.corpus_root, config.cancer_type)?;
    let gateway = config.backend.gateway(config.max_in_flight)?;
    let model = config.backend.model().to_string();

    let (sets, pairs) = config.install(|| {
        build_preference_pairs(&gateway, &model, config.sampling, &records, args.k)
    })??;
    let sft = build_sft_dataset(&records);
    emit_datasets(&sft, &pairs, &args.out)?;
    let candidates_path = args.out.join("candidates.json");
    fs::write(
        &candidates_path,
        serde_json::to_string_pretty(&sets)? + "\n",
    )
    .with_context(|| format!("writing {}", candidates_path.display()))?;
    let mut meta = DatasetMetadata::new(sft.len(), pairs.len());
    meta.model = Some(model);
    meta.sampling = Some(config.sampling);
    meta.recommended.candidates_per_note = args.k;
    meta.write(&args.out)?;
    eprintln!(
        "{} candidate sets, {} preference pairs -> {}",
        sets.len(),
        pairs.len(),
        args.out.display()
    );
    Ok(())
}

fn run(args: &RunArgs) -> Result<()> {
    let config = args.load()?;
    let report = run_pipeline(&config)?;
    let m = &report.manifest;
    eprintln!(
        "{} patients, {} notes, {} raw triplets, {} timeline events, {} warnings, {} ms",
        m.patients,
        m.notes,
        m.raw_triplets,
        m.timeline_events,
        m.warnings.total(),
        m.elapsed_ms
    );
    if let Some(metrics) = &report.metrics {
        io::stdout().write_all(metrics.table().as_bytes())?;
    }
    eprintln!("outputs in {}", report.output_dir.display());
    Ok(())
}

fn fixture_key(args: &FixtureKeyArgs) -> Result<()> {
    let mut payload = String::new();
    io::stdin().read_to_string(&mut payload)?;
    println!(
        "{}",
        request_key(args.template, &payload, args.thinking, args.sample_index)
    );
    Ok(())
}
