//! capsieve: curate image–caption manifests from the command line.
//!
//! Subcommands mirror the pipeline stages so each can run in isolation over
//! a JSONL manifest, plus `run` for the full configured stage list. Exit
//! codes: 0 success, 1 configuration error, 2 data error over budget,
//! 3 client/backend failure.

mod http;
mod pixels;

use std::fmt;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use capsieve_core::analytics::{bucket_stats, word_frequency, BucketSpec, StageLogbook};
use capsieve_core::caption::{canonicalize, render, MarkerStyle};
use capsieve_core::manifest::{
    read_all_path, write_manifest_path, ManifestError, ManifestRecord, ReadOptions,
};
use capsieve_core::pipeline::{
    run_pipeline, run_stage, validate_config, MetricKind, PipelineConfig, PipelineError,
    PixelSource, StageClients, StageKind,
};
use capsieve_core::scoring::AestheticClient;
use capsieve_core::stopwords::{default_stopwords, parse_stopword_list};
use capsieve_core::synth::{
    aesthetic_sidecar_lines, detector_sidecar_lines, synthetic_records, synthetic_records_bare,
};
use capsieve_core::vqa::{score_pairs, ConstantVqa, EvalOptions, EvalPair, VqaClient, VqaError};

use crate::http::{HttpAesthetic, HttpVqa};
use crate::pixels::LocalPixelSource;

// ---------------------------------------------------------------------------
// Errors and exit codes
// ---------------------------------------------------------------------------

#[derive(Debug)]
enum CliError {
    Config(String),
    Data(String),
    Client(String),
}

impl CliError {
    fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 1,
            CliError::Data(_) => 2,
            CliError::Client(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(msg) | CliError::Data(msg) | CliError::Client(msg) => {
                f.write_str(msg)
            }
        }
    }
}

impl From<PipelineError> for CliError {
    fn from(e: PipelineError) -> Self {
        match e.exit_code() {
            1 => CliError::Config(e.to_string()),
            3 => CliError::Client(e.to_string()),
            _ => CliError::Data(e.to_string()),
        }
    }
}

impl From<ManifestError> for CliError {
    fn from(e: ManifestError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

/// Pair-list problems are the operator's data; everything else means the
/// backend failed us.
fn vqa_error(e: VqaError) -> CliError {
    match e {
        VqaError::NoPairs | VqaError::EmptyCaption | VqaError::EmptyPairCaption { .. } => {
            CliError::Data(e.to_string())
        }
        _ => CliError::Client(e.to_string()),
    }
}

fn json_error(e: serde_json::Error) -> CliError {
    CliError::Data(e.to_string())
}

// ---------------------------------------------------------------------------
// Argument grammar
// ---------------------------------------------------------------------------

/// Curate image–caption manifests: gate, score, filter, and analyze them.
#[derive(Parser)]
#[command(name = "capsieve", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the configured stage list over a manifest into a directory
    Run(RunArgs),
    /// Drop records failing the size or aspect-ratio gate
    Prefilter(GateArgs),
    /// Fill in missing aesthetic, luminance, and OCR scores
    Score(ScoreArgs),
    /// Keep records passing the aesthetic/luminance/OCR thresholds
    Filter(GateArgs),
    /// Histogram one score field with per-bucket statistics
    Buckets(BucketsArgs),
    /// Corpus statistics over a manifest
    #[command(subcommand)]
    Stats(StatsCommand),
    /// Validate, shuffle, canonicalize, or rewrite structured captions
    #[command(subcommand)]
    Caption(CaptionCommand),
    /// Score text–image alignment through a backend
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Inspect a run's stage funnel
    #[command(subcommand)]
    Logbook(LogbookCommand),
    /// Generate a synthetic manifest and sidecars for dry runs
    Synth(SynthArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Input manifest (JSONL)
    #[arg(long = "in", value_name = "MANIFEST")]
    input: PathBuf,
    /// Directory for per-stage manifests, reports, and the checkpoint
    #[arg(long, value_name = "DIR")]
    out_dir: PathBuf,
    /// Pipeline configuration (TOML); defaults apply when omitted
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Continue from this directory's checkpoint if inputs still match
    #[arg(long)]
    resume: bool,
    /// Override the configured worker count
    #[arg(long)]
    workers: Option<usize>,
    /// Override the configured seed
    #[arg(long)]
    seed: Option<u64>,
    /// Directory that relative image paths resolve under
    #[arg(long, value_name = "DIR")]
    images_root: Option<PathBuf>,
}

#[derive(Args)]
struct GateArgs {
    /// Input manifest (JSONL)
    #[arg(long = "in", value_name = "MANIFEST")]
    input: PathBuf,
    /// Output manifest for surviving records
    #[arg(long, value_name = "MANIFEST")]
    out: PathBuf,
    /// Also write non-surviving records here
    #[arg(long, value_name = "MANIFEST")]
    rejected: Option<PathBuf>,
    /// Pipeline configuration (TOML); defaults apply when omitted
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// Tolerated record-level data errors
    #[arg(long, default_value_t = 0)]
    error_budget: u64,
}

#[derive(Args)]
struct ScoreArgs {
    /// Input manifest (JSONL)
    #[arg(long = "in", value_name = "MANIFEST")]
    input: PathBuf,
    /// Output manifest with scores filled in
    #[arg(long, value_name = "MANIFEST")]
    out: PathBuf,
    /// Pipeline configuration (TOML); defaults apply when omitted
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    /// JSONL of {"id", "aesthetic"} lines replacing a live scorer
    #[arg(long, value_name = "FILE")]
    aesthetic_sidecar: Option<PathBuf>,
    /// JSONL of {"id", "polygons"} text-detector output; an empty file
    /// asserts a no-text corpus
    #[arg(long, value_name = "FILE")]
    detector_sidecar: Option<PathBuf>,
    /// Aesthetic scorer endpoint; wins over sidecar and config
    #[arg(long, value_name = "URL", env = "CAPSIEVE_AESTHETIC_ENDPOINT")]
    aesthetic_endpoint: Option<String>,
    /// Directory that relative image paths resolve under
    #[arg(long, value_name = "DIR")]
    images_root: Option<PathBuf>,
    /// Tolerated record-level data errors
    #[arg(long, default_value_t = 0)]
    error_budget: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum MetricArg {
    Luminance,
    Aesthetic,
    Ocr,
}

impl From<MetricArg> for MetricKind {
    fn from(m: MetricArg) -> Self {
        match m {
            MetricArg::Luminance => MetricKind::Luminance,
            MetricArg::Aesthetic => MetricKind::Aesthetic,
            MetricArg::Ocr => MetricKind::Ocr,
        }
    }
}

#[derive(Args)]
struct BucketsArgs {
    /// Input manifest (JSONL)
    #[arg(long = "in", value_name = "MANIFEST")]
    input: PathBuf,
    /// Score field to histogram
    #[arg(long, value_enum)]
    metric: MetricArg,
    /// Number of equal-width buckets
    #[arg(long, default_value_t = 10)]
    k: u32,
    /// Fixed range LOW:HIGH; inferred from the data when omitted
    #[arg(long, value_name = "LOW:HIGH")]
    range: Option<String>,
    /// Write the report as JSON here (the table always prints)
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Tolerated record-level data errors
    #[arg(long, default_value_t = 0)]
    error_budget: u64,
}

#[derive(Subcommand)]
enum StatsCommand {
    /// Word frequencies over caption text, stopwords removed
    Words(WordsArgs),
}

#[derive(Args)]
struct WordsArgs {
    /// Input manifest (JSONL)
    #[arg(long = "in", value_name = "MANIFEST")]
    input: PathBuf,
    /// Replace the built-in stopword list (one word per line, # comments)
    #[arg(long, value_name = "FILE")]
    stopwords: Option<PathBuf>,
    /// How many tokens to list
    #[arg(long, default_value_t = 20)]
    top: usize,
    /// Write the full report as JSON here
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Tolerated record-level data errors
    #[arg(long, default_value_t = 0)]
    error_budget: u64,
}

#[derive(Clone, Copy, ValueEnum)]
enum StyleArg {
    Numeric,
    Tilde,
}

impl From<StyleArg> for MarkerStyle {
    fn from(s: StyleArg) -> Self {
        match s {
            StyleArg::Numeric => MarkerStyle::Numeric,
            StyleArg::Tilde => MarkerStyle::Tilde,
        }
    }
}

#[derive(Subcommand)]
enum CaptionCommand {
    /// Check grammar and slot content; annotate survivors with parsed slots
    Validate(GateArgs),
    /// Apply each record's seeded random slot permutation
    Shuffle(CaptionShuffleArgs),
    /// Restore canonical slot order from shuffled captions
    Canonicalize(CaptionIoArgs),
    /// Rewrite numeric markers to the tokenizer-safe tilde form
    Rewrite(CaptionIoArgs),
}

#[derive(Args)]
struct CaptionShuffleArgs {
    /// Input manifest (JSONL); records need validated caption slots
    #[arg(long = "in", value_name = "MANIFEST")]
    input: PathBuf,
    /// Output manifest with shuffled captions and their permutations
    #[arg(long, value_name = "MANIFEST")]
    out: PathBuf,
    /// Seed for the per-record permutation draw
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Marker style for the shuffled text
    #[arg(long, value_enum, default_value_t = StyleArg::Numeric)]
    style: StyleArg,
    /// Tolerated record-level data errors
    #[arg(long, default_value_t = 0)]
    error_budget: u64,
}

#[derive(Args)]
struct CaptionIoArgs {
    /// Input manifest (JSONL)
    #[arg(long = "in", value_name = "MANIFEST")]
    input: PathBuf,
    /// Output manifest
    #[arg(long, value_name = "MANIFEST")]
    out: PathBuf,
    /// Tolerated record-level data errors
    #[arg(long, default_value_t = 0)]
    error_budget: u64,
}

#[derive(Subcommand)]
enum EvalCommand {
    /// Mean probability of "yes" to "Is the figure showing: <caption>?"
    Vqa(VqaArgs),
}

#[derive(Args)]
struct VqaArgs {
    /// JSONL of {"id", "uri", "caption"} pairs
    #[arg(long, value_name = "FILE")]
    pairs: PathBuf,
    /// Alignment backend endpoint
    #[arg(long, value_name = "URL", env = "CAPSIEVE_VQA_ENDPOINT")]
    client: Option<String>,
    /// Answer every question with this constant instead of a backend
    #[arg(long, value_name = "P")]
    stub: Option<f64>,
    /// Write the report as JSON here
    #[arg(long, value_name = "FILE")]
    out: Option<PathBuf>,
    /// Average over the pairs that scored even if some failed
    #[arg(long)]
    allow_gaps: bool,
    /// Bounded request fan-out
    #[arg(long)]
    fanout: Option<usize>,
    /// Retries per pair for transient failures
    #[arg(long)]
    retries: Option<u32>,
    /// Backend name recorded in the report
    #[arg(long)]
    model: Option<String>,
}

#[derive(Subcommand)]
enum LogbookCommand {
    /// Print the stage funnel of a finished run
    Show(LogbookShowArgs),
}

#[derive(Args)]
struct LogbookShowArgs {
    /// A run directory or a logbook.json file
    #[arg(value_name = "PATH")]
    path: PathBuf,
}

#[derive(Args)]
struct SynthArgs {
    /// How many records to generate
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Generator seed
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output manifest (JSONL)
    #[arg(long, value_name = "MANIFEST")]
    out: PathBuf,
    /// Leave scores empty so the score stage has real work to do
    #[arg(long)]
    bare: bool,
    /// Also write a matching aesthetic sidecar here
    #[arg(long, value_name = "FILE")]
    aesthetic_sidecar: Option<PathBuf>,
    /// Also write a matching text-detector sidecar here
    #[arg(long, value_name = "FILE")]
    detector_sidecar: Option<PathBuf>,
    /// Detector frame side for synthetic polygons
    #[arg(long, default_value_t = 736.0)]
    frame: f64,
}

// ---------------------------------------------------------------------------
// Shared plumbing
// ---------------------------------------------------------------------------

fn load_config(path: &Option<PathBuf>) -> Result<PipelineConfig, CliError> {
    match path {
        Some(path) => PipelineConfig::load(path).map_err(|e| CliError::Config(e.to_string())),
        None => Ok(PipelineConfig::default()),
    }
}

struct LoadedRecords {
    records: Vec<ManifestRecord>,
    /// Input-level data errors already counted against the budget.
    errors: u64,
}

fn load_records(path: &Path, budget: u64) -> Result<LoadedRecords, CliError> {
    let load = read_all_path(
        path,
        &ReadOptions { error_budget: budget as usize, check_duplicates: true },
    )?;
    let mut errors = load.line_errors.len() as u64;
    for line in &load.line_errors {
        eprintln!("warning: {}: {line}", path.display());
    }
    let mut records = Vec::with_capacity(load.records.len());
    for record in load.records {
        match record.validate() {
            Ok(()) => records.push(record),
            Err(violations) => {
                errors += 1;
                eprintln!("warning: record {:?}: {}", record.id, violations.join("; "));
            }
        }
    }
    if errors > budget {
        return Err(CliError::Data(format!(
            "{errors} record error(s) exceed the budget of {budget}"
        )));
    }
    Ok(LoadedRecords { records, errors })
}

/// Run one stage over a manifest file and write the survivors (and
/// optionally the rejects) back out.
#[allow(clippy::too_many_arguments)]
fn exec_single_stage(
    stage: StageKind,
    input: &Path,
    out: &Path,
    rejected: Option<&Path>,
    cfg: &PipelineConfig,
    clients: &StageClients,
    budget: u64,
) -> Result<(), CliError> {
    let violations = validate_config(cfg);
    if !violations.is_empty() {
        return Err(CliError::Config(violations.join("\n")));
    }
    let loaded = load_records(input, budget)?;
    let in_count = loaded.records.len();
    let outcome = run_stage(loaded.records, stage, cfg, clients)?;
    for err in &outcome.errors {
        eprintln!("warning: record {:?}: {}", err.id, err.error);
    }
    let errors = loaded.errors + outcome.errors.len() as u64;
    if errors > budget {
        return Err(CliError::Data(format!(
            "{errors} record error(s) exceed the budget of {budget}"
        )));
    }
    write_manifest_path(outcome.kept.iter(), out)?;
    if let Some(path) = rejected {
        write_manifest_path(outcome.rejected.iter(), path)?;
    }
    println!(
        "{}: {} -> {} kept, {} rejected, {} error(s)",
        stage.name(),
        in_count,
        outcome.kept.len(),
        outcome.rejected.len(),
        errors
    );
    Ok(())
}

fn caption_text(record: &ManifestRecord) -> Option<String> {
    record
        .caption_raw
        .clone()
        .or_else(|| record.caption_slots.as_ref().map(|s| render(s, MarkerStyle::Numeric)))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(json_error)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Subcommand bodies
// ---------------------------------------------------------------------------

fn exec_run(args: RunArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&args.config)?;
    // Endpoints — and only endpoints — may come from the environment,
    // overriding whatever the config file says.
    if let Ok(url) = std::env::var("CAPSIEVE_AESTHETIC_ENDPOINT") {
        if !url.is_empty() {
            cfg.aesthetic_endpoint = Some(url);
        }
    }
    if let Ok(url) = std::env::var("CAPSIEVE_VQA_ENDPOINT") {
        if !url.is_empty() {
            cfg.vqa_endpoint = Some(url);
        }
    }
    if let Some(workers) = args.workers {
        cfg.workers = workers;
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    let clients = StageClients {
        aesthetic: cfg
            .aesthetic_endpoint
            .clone()
            .map(|url| Arc::new(HttpAesthetic::new(url)) as Arc<dyn AestheticClient>),
        pixels: Some(Arc::new(LocalPixelSource::new(args.images_root)) as Arc<dyn PixelSource>),
    };
    let summary = run_pipeline(&cfg, &args.input, &args.out_dir, &clients, args.resume)?;
    if summary.resumed_stages > 0 {
        println!("resumed past {} completed stage(s)", summary.resumed_stages);
    }
    print!("{}", summary.logbook.render());
    if summary.record_errors > 0 {
        println!("record errors within budget: {}", summary.record_errors);
    }
    for report in &summary.reports {
        println!("report: {}", report.display());
    }
    println!("final manifest: {}", summary.final_manifest.display());
    Ok(())
}

fn exec_score(args: ScoreArgs) -> Result<(), CliError> {
    let mut cfg = load_config(&args.config)?;
    if args.aesthetic_sidecar.is_some() {
        cfg.aesthetic_sidecar = args.aesthetic_sidecar.clone();
    }
    if args.detector_sidecar.is_some() {
        cfg.detector_sidecar = args.detector_sidecar.clone();
    }
    if args.aesthetic_endpoint.is_some() {
        cfg.aesthetic_endpoint = args.aesthetic_endpoint.clone();
    }
    let clients = StageClients {
        aesthetic: cfg
            .aesthetic_endpoint
            .clone()
            .map(|url| Arc::new(HttpAesthetic::new(url)) as Arc<dyn AestheticClient>),
        pixels: Some(Arc::new(LocalPixelSource::new(args.images_root.clone()))
            as Arc<dyn PixelSource>),
    };
    exec_single_stage(
        StageKind::Score,
        &args.input,
        &args.out,
        None,
        &cfg,
        &clients,
        args.error_budget,
    )
}

fn exec_buckets(args: BucketsArgs) -> Result<(), CliError> {
    let loaded = load_records(&args.input, args.error_budget)?;
    let metric = MetricKind::from(args.metric);
    let values: Vec<f64> = loaded.records.iter().filter_map(|r| metric.get(r)).collect();
    let spec = match &args.range {
        Some(text) => parse_range(text, args.k)?,
        None => BucketSpec::covering(args.k, values.iter().copied())
            .map_err(|e| CliError::Data(format!("cannot infer a {} range: {e}", metric.name())))?,
    };
    let report = bucket_stats(values.iter().copied(), spec)
        .map_err(|e| CliError::Data(e.to_string()))?
        .with_metric(metric.name());
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    print!("{}", report.render_table());
    Ok(())
}

fn parse_range(text: &str, k: u32) -> Result<BucketSpec, CliError> {
    let bad = |detail: String| CliError::Config(format!("--range wants LOW:HIGH: {detail}"));
    let (low, high) =
        text.split_once(':').ok_or_else(|| bad(format!("no ':' in {text:?}")))?;
    let low: f64 = low.trim().parse().map_err(|_| bad(format!("bad low bound {low:?}")))?;
    let high: f64 =
        high.trim().parse().map_err(|_| bad(format!("bad high bound {high:?}")))?;
    BucketSpec::new(low, high, k).map_err(|e| CliError::Config(e.to_string()))
}

#[derive(Serialize)]
struct WordReport<'a> {
    records: u64,
    with_captions: u64,
    distinct_tokens: u64,
    top: Vec<WordRow<'a>>,
}

#[derive(Serialize)]
struct WordRow<'a> {
    token: &'a str,
    count: u64,
}

fn exec_words(args: WordsArgs) -> Result<(), CliError> {
    let loaded = load_records(&args.input, args.error_budget)?;
    let texts: Vec<String> = loaded.records.iter().filter_map(caption_text).collect();
    let custom = match &args.stopwords {
        Some(path) => Some(parse_stopword_list(&std::fs::read_to_string(path)?)),
        None => None,
    };
    let frequency = match &custom {
        Some(list) => word_frequency(texts.iter().map(String::as_str), list),
        None => word_frequency(texts.iter().map(String::as_str), default_stopwords()),
    };
    let top = frequency.top(args.top);
    let width = top.first().map(|(_, c)| c.to_string().len()).unwrap_or(1);
    for (token, count) in &top {
        println!("{count:>width$}  {token}");
    }
    if let Some(path) = &args.out {
        let report = WordReport {
            records: loaded.records.len() as u64,
            with_captions: texts.len() as u64,
            distinct_tokens: frequency.len() as u64,
            top: top.iter().map(|&(token, count)| WordRow { token, count }).collect(),
        };
        write_json(path, &report)?;
    }
    Ok(())
}

fn exec_caption_shuffle(args: CaptionShuffleArgs) -> Result<(), CliError> {
    let cfg = PipelineConfig {
        seed: args.seed,
        caption_style: args.style.into(),
        ..PipelineConfig::default()
    };
    exec_single_stage(
        StageKind::CaptionShuffle,
        &args.input,
        &args.out,
        None,
        &cfg,
        &StageClients::default(),
        args.error_budget,
    )
}

fn exec_caption_canonicalize(args: CaptionIoArgs) -> Result<(), CliError> {
    let loaded = load_records(&args.input, args.error_budget)?;
    let in_count = loaded.records.len();
    let mut errors = loaded.errors;
    let mut kept = Vec::with_capacity(in_count);
    for mut record in loaded.records {
        let slots = match (&record.caption_raw, record.permutation) {
            (Some(raw), Some(g)) => match canonicalize(raw, g) {
                Ok(slots) => slots,
                Err(e) => {
                    errors += 1;
                    eprintln!("warning: record {:?}: {e}", record.id);
                    continue;
                }
            },
            _ => match record.caption_slots.clone() {
                Some(slots) => slots,
                None => {
                    errors += 1;
                    eprintln!(
                        "warning: record {:?}: no permutation or validated slots to restore from",
                        record.id
                    );
                    continue;
                }
            },
        };
        record.caption_raw = Some(render(&slots, MarkerStyle::Numeric));
        record.caption_slots = Some(slots);
        record.permutation = None;
        kept.push(record);
    }
    if errors > args.error_budget {
        return Err(CliError::Data(format!(
            "{errors} record error(s) exceed the budget of {}",
            args.error_budget
        )));
    }
    write_manifest_path(kept.iter(), &args.out)?;
    println!("caption_canonicalize: {} -> {} kept, {} error(s)", in_count, kept.len(), errors);
    Ok(())
}

fn exec_vqa(args: VqaArgs) -> Result<(), CliError> {
    let pairs = read_pairs(&args.pairs)?;
    let client: Box<dyn VqaClient> = match (&args.client, args.stub) {
        (Some(_), Some(_)) => {
            return Err(CliError::Config("--client and --stub are mutually exclusive".into()));
        }
        (Some(url), None) => Box::new(HttpVqa::new(url.clone())),
        (None, Some(p)) => Box::new(ConstantVqa(p)),
        (None, None) => {
            return Err(CliError::Config(
                "an alignment backend is required: pass --client URL or --stub P".into(),
            ));
        }
    };
    let mut options = EvalOptions { allow_gaps: args.allow_gaps, ..EvalOptions::default() };
    if let Some(fanout) = args.fanout {
        options.fanout = fanout;
    }
    if let Some(retries) = args.retries {
        options.retries = retries;
    }
    options.model = args.model;
    let report = score_pairs(&pairs, client.as_ref(), &options).map_err(vqa_error)?;
    if let Some(path) = &args.out {
        write_json(path, &report)?;
    }
    println!(
        "mean p_yes {:.4} over {} pair(s), {} gap(s)",
        report.mean,
        report.rows.len(),
        report.gaps
    );
    Ok(())
}

fn read_pairs(path: &Path) -> Result<Vec<EvalPair>, CliError> {
    let text = std::fs::read_to_string(path)?;
    let mut pairs = Vec::new();
    for (idx, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let pair: EvalPair = serde_json::from_str(line).map_err(|e| {
            CliError::Data(format!("{}:{}: {e}", path.display(), idx + 1))
        })?;
        pairs.push(pair);
    }
    Ok(pairs)
}

fn exec_logbook_show(args: LogbookShowArgs) -> Result<(), CliError> {
    let path =
        if args.path.is_dir() { args.path.join("logbook.json") } else { args.path.clone() };
    let text = std::fs::read_to_string(&path)?;
    let logbook: StageLogbook = serde_json::from_str(&text)
        .map_err(|e| CliError::Data(format!("{}: {e}", path.display())))?;
    if logbook.is_empty() {
        println!("(empty logbook)");
    } else {
        print!("{}", logbook.render());
    }
    Ok(())
}

fn exec_synth(args: SynthArgs) -> Result<(), CliError> {
    let records = if args.bare {
        synthetic_records_bare(args.n, args.seed)
    } else {
        synthetic_records(args.n, args.seed)
    };
    write_manifest_path(records.iter(), &args.out)?;
    if let Some(path) = &args.aesthetic_sidecar {
        write_lines(path, &aesthetic_sidecar_lines(&records, args.seed))?;
    }
    if let Some(path) = &args.detector_sidecar {
        write_lines(path, &detector_sidecar_lines(&records, args.frame, args.seed))?;
    }
    println!("wrote {} record(s) to {}", records.len(), args.out.display());
    Ok(())
}

fn write_lines(path: &Path, lines: &[String]) -> Result<(), CliError> {
    let mut text = lines.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// Entry
// ---------------------------------------------------------------------------

impl Command {
    fn execute(self) -> Result<(), CliError> {
        match self {
            Command::Run(args) => exec_run(args),
            Command::Prefilter(args) => exec_single_stage(
                StageKind::Prefilter,
                &args.input,
                &args.out,
                args.rejected.as_deref(),
                &load_config(&args.config)?,
                &StageClients::default(),
                args.error_budget,
            ),
            Command::Score(args) => exec_score(args),
            Command::Filter(args) => exec_single_stage(
                StageKind::Filter,
                &args.input,
                &args.out,
                args.rejected.as_deref(),
                &load_config(&args.config)?,
                &StageClients::default(),
                args.error_budget,
            ),
            Command::Buckets(args) => exec_buckets(args),
            Command::Stats(StatsCommand::Words(args)) => exec_words(args),
            Command::Caption(CaptionCommand::Validate(args)) => exec_single_stage(
                StageKind::CaptionValidate,
                &args.input,
                &args.out,
                args.rejected.as_deref(),
                &load_config(&args.config)?,
                &StageClients::default(),
                args.error_budget,
            ),
            Command::Caption(CaptionCommand::Shuffle(args)) => exec_caption_shuffle(args),
            Command::Caption(CaptionCommand::Canonicalize(args)) => {
                exec_caption_canonicalize(args)
            }
            Command::Caption(CaptionCommand::Rewrite(args)) => exec_single_stage(
                StageKind::CaptionRewrite,
                &args.input,
                &args.out,
                None,
                &PipelineConfig::default(),
                &StageClients::default(),
                args.error_budget,
            ),
            Command::Eval(EvalCommand::Vqa(args)) => exec_vqa(args),
            Command::Logbook(LogbookCommand::Show(args)) => exec_logbook_show(args),
            Command::Synth(args) => exec_synth(args),
        }
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Help and version land on stdout and exit clean; real parse
            // errors are configuration errors.
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            std::process::exit(code);
        }
    };
    if let Err(e) = cli.command.execute() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
