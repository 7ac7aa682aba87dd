//! Stage orchestration: run the curation stages end-to-end with resumable,
//! deterministic, byte-reproducible outputs.
//!
//! Stages communicate only through manifests on disk — each stage reads the
//! prior stage's manifest and writes its own, so any stage can be rerun in
//! isolation. Record work is scheduled by input index and results are
//! restored to input order before writing, which makes outputs identical
//! for any worker count. A checkpoint names every completed stage with its
//! output digest; an interrupted run resumes from the last completed stage.

use std::collections::HashSet;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::analytics::{
    BucketHistogram, BucketSpec, OverflowPolicy, StageLogbook, StdMode, word_frequency,
};
use crate::caption::{
    detect_defect, parse_caption, random_permutation, render, rewrite_markers, shuffle,
    DefectConfig, MarkerStyle,
};
use crate::client::RetryPolicy;
use crate::geometry::{passes_prefilter, GeometryConfig, PixelBuffer};
use crate::manifest::{
    file_digest, read_all_path, write_manifest, FilterOutcome, ManifestError, ManifestRecord,
    ReadOptions, ReasonCode,
};
use crate::par::par_map_indexed;
use crate::scoring::{
    keep_decision, luminance_score, ocr_score, AestheticClient, CachedAesthetic, DetectorSidecar,
    FilterConfig, SidecarAesthetics,
};
use crate::stopwords::default_stopwords;
use crate::client::ClientError;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, thiserror::Error)]
pub enum PipelineError {
    #[error("invalid configuration:\n{}", .0.join("\n"))]
    Config(Vec<String>),
    #[error(transparent)]
    Manifest(#[from] ManifestError),
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("stage {stage}: {errors} record errors exceed the budget of {budget}")]
    BudgetExceeded { stage: String, errors: u64, budget: u64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("stage {stage}: {message}")]
    Client { stage: String, message: String },
}

impl PipelineError {
    /// Process exit code: 1 config error, 2 data error over budget,
    /// 3 client failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Config(_) => 1,
            PipelineError::Manifest(_)
            | PipelineError::Io(_)
            | PipelineError::BudgetExceeded { .. }
            | PipelineError::Checkpoint(_) => 2,
            PipelineError::Client { .. } => 3,
        }
    }
}

// ---------------------------------------------------------------------------
// Configuration
// ---------------------------------------------------------------------------

/// The pipeline stages, in the order they may appear in a config.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StageKind {
    Prefilter,
    Score,
    Filter,
    CaptionValidate,
    CaptionShuffle,
    CaptionRewrite,
    Buckets,
    WordStats,
}

impl StageKind {
    pub fn name(self) -> &'static str {
        match self {
            StageKind::Prefilter => "prefilter",
            StageKind::Score => "score",
            StageKind::Filter => "filter",
            StageKind::CaptionValidate => "caption_validate",
            StageKind::CaptionShuffle => "caption_shuffle",
            StageKind::CaptionRewrite => "caption_rewrite",
            StageKind::Buckets => "buckets",
            StageKind::WordStats => "word_stats",
        }
    }
}

/// Score fields a histogram can be requested over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Aesthetic,
    Luminance,
    Ocr,
}

impl MetricKind {
    pub fn name(self) -> &'static str {
        match self {
            MetricKind::Aesthetic => "aesthetic",
            MetricKind::Luminance => "luminance",
            MetricKind::Ocr => "ocr",
        }
    }

    pub fn get(self, record: &ManifestRecord) -> Option<f64> {
        match self {
            MetricKind::Aesthetic => record.scores.aesthetic,
            MetricKind::Luminance => record.scores.luminance,
            MetricKind::Ocr => record.scores.ocr,
        }
    }
}

/// One requested histogram. Omitting the range buckets over the data's own
/// min/max, discovered in a first pass; pinning it keeps edges reproducible
/// across corpora.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRequest {
    pub metric: MetricKind,
    pub k: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub low: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub high: Option<f64>,
}

/// Full pipeline configuration. Every default matches the method's printed
/// operating point (1024 minimum side, 0.6666 aspect floor, 4.73 aesthetic
/// cut, [12.75, 204.00] luminance band, 0.7 detector confidence, 736 frame).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    /// Global seed for per-record derived randomness (caption shuffling).
    pub seed: u64,
    /// Record-parallel workers per stage; 1 means sequential.
    pub workers: usize,
    /// Total tolerated record-level data errors before the run aborts.
    pub error_budget: u64,
    pub stages: Vec<StageKind>,
    pub geometry: GeometryConfig,
    pub filter: FilterConfig,
    pub defects: DefectConfig,
    /// Marker style used when stages render slot content to text.
    pub caption_style: MarkerStyle,
    pub buckets: Vec<BucketRequest>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aesthetic_sidecar: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub detector_sidecar: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub aesthetic_endpoint: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub vqa_endpoint: Option<String>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            seed: 0,
            workers: 1,
            error_budget: 0,
            stages: vec![
                StageKind::Prefilter,
                StageKind::Score,
                StageKind::Filter,
                StageKind::CaptionValidate,
                StageKind::Buckets,
                StageKind::WordStats,
            ],
            geometry: GeometryConfig::default(),
            filter: FilterConfig::default(),
            defects: DefectConfig::default(),
            caption_style: MarkerStyle::Numeric,
            buckets: vec![
                BucketRequest {
                    metric: MetricKind::Luminance,
                    k: 20,
                    low: Some(0.0),
                    high: Some(255.0),
                },
                BucketRequest { metric: MetricKind::Aesthetic, k: 10, low: None, high: None },
                BucketRequest { metric: MetricKind::Ocr, k: 10, low: Some(0.0), high: Some(1.0) },
            ],
            aesthetic_sidecar: None,
            detector_sidecar: None,
            aesthetic_endpoint: None,
            vqa_endpoint: None,
        }
    }
}

impl PipelineConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        toml::from_str(text).map_err(|e| PipelineError::Config(vec![e.to_string()]))
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes to TOML")
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text)
    }
}

/// Every configuration violation, each naming the offending field. Also
/// verifies that referenced sidecar files exist, since a run would otherwise
/// fail only after stages have started.
pub fn validate_config(cfg: &PipelineConfig) -> Vec<String> {
    let mut out = Vec::new();
    if cfg.workers == 0 {
        out.push("pipeline.workers must be at least 1".into());
    }
    if cfg.stages.is_empty() {
        out.push("pipeline.stages must not be empty".into());
    }
    let mut seen = HashSet::new();
    for stage in &cfg.stages {
        if !seen.insert(stage.name()) {
            out.push(format!("pipeline.stages lists {} more than once", stage.name()));
        }
    }
    if let Some(shuffle_at) = cfg.stages.iter().position(|s| *s == StageKind::CaptionShuffle) {
        let validated_before = cfg.stages[..shuffle_at]
            .iter()
            .any(|s| *s == StageKind::CaptionValidate);
        if !validated_before {
            out.push(
                "pipeline.stages: caption_shuffle requires caption_validate earlier in the list"
                    .into(),
            );
        }
    }
    out.extend(cfg.geometry.validate());
    out.extend(cfg.filter.validate());
    out.extend(cfg.defects.validate());
    for (idx, request) in cfg.buckets.iter().enumerate() {
        if request.k == 0 {
            out.push(format!("pipeline.buckets[{idx}].k must be at least 1"));
        }
        match (request.low, request.high) {
            (Some(low), Some(high)) => {
                if !low.is_finite() || !high.is_finite() || !(low < high) {
                    out.push(format!(
                        "pipeline.buckets[{idx}] range [{low}, {high}] must be finite with low < high"
                    ));
                }
            }
            (None, None) => {}
            _ => out.push(format!(
                "pipeline.buckets[{idx}] must set both low and high, or neither"
            )),
        }
    }
    for (name, path) in [
        ("pipeline.aesthetic_sidecar", &cfg.aesthetic_sidecar),
        ("pipeline.detector_sidecar", &cfg.detector_sidecar),
    ] {
        if let Some(path) = path {
            if !path.is_file() {
                out.push(format!("{name}: no such file: {}", path.display()));
            }
        }
    }
    out
}

// ---------------------------------------------------------------------------
// External providers
// ---------------------------------------------------------------------------

/// A source of decoded RGB pixels for a record. `expect` carries the
/// manifest's dimensions; implementations either honor them (generators) or
/// return the real decoded size, which the caller cross-checks.
pub trait PixelSource: Send + Sync {
    fn load(&self, id: &str, uri: &str, expect: (u32, u32)) -> Result<PixelBuffer, ClientError>;
}

/// Externally supplied providers. Sidecar paths in the config fill whatever
/// is not injected here; an explicit client wins over a sidecar.
#[derive(Clone, Default)]
pub struct StageClients {
    pub aesthetic: Option<Arc<dyn AestheticClient>>,
    pub pixels: Option<Arc<dyn PixelSource>>,
}

// ---------------------------------------------------------------------------
// Run summary and checkpointing
// ---------------------------------------------------------------------------

/// What a completed run produced.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub logbook: StageLogbook,
    pub final_manifest: PathBuf,
    pub reports: Vec<PathBuf>,
    /// Record-level data errors tolerated within the budget.
    pub record_errors: u64,
    /// Stages skipped because a valid checkpoint already covered them.
    pub resumed_stages: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config_digest: String,
    input_digest: String,
    completed: Vec<CompletedStage>,
    logbook: StageLogbook,
    record_errors: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CompletedStage {
    stage: StageKind,
    file: String,
    digest: String,
    records: u64,
}

const CHECKPOINT_VERSION: u32 = 1;

fn sha256_hex(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    format!("{:x}", hasher.finalize())
}

/// Write via a sibling temp file and rename, so readers never observe a
/// half-written file and interrupted runs leave no torn state.
fn atomic_write(path: &Path, bytes: &[u8]) -> io::Result<()> {
    let file_name = path
        .file_name()
        .and_then(|n| n.to_str())
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "path has no file name"))?;
    let tmp = path.with_file_name(format!("{file_name}.tmp"));
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)
}

// ---------------------------------------------------------------------------
// Stage plumbing
// ---------------------------------------------------------------------------

/// A record-level data error: the record is set aside, the run continues
/// while the budget lasts.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageRecordError {
    pub id: String,
    pub error: String,
}

/// What one stage did with its input records.
#[derive(Debug, Default)]
pub struct StageOutcome {
    pub kept: Vec<ManifestRecord>,
    pub rejected: Vec<ManifestRecord>,
    pub errors: Vec<StageRecordError>,
}

/// Per-record outcome inside a parallel stage, reduced in input order.
enum ScoreWork {
    Done(Box<ManifestRecord>),
    Data { id: String, error: String },
    Abort(String),
}

struct Providers {
    aesthetic: Option<Arc<dyn AestheticClient>>,
    pixels: Option<Arc<dyn PixelSource>>,
    detector: Option<DetectorSidecar>,
}

fn dedup_codes(codes: Vec<ReasonCode>) -> Vec<ReasonCode> {
    let mut out: Vec<ReasonCode> = Vec::with_capacity(codes.len());
    for code in codes {
        if !out.contains(&code) {
            out.push(code);
        }
    }
    out
}

/// Run one record-transforming stage in isolation, outside a full run.
/// Reporting stages (`buckets`, `word_stats`) pass records through
/// untouched here; their reports only exist within [`run_pipeline`], which
/// owns an output directory to write them into.
pub fn run_stage(
    records: Vec<ManifestRecord>,
    stage: StageKind,
    cfg: &PipelineConfig,
    clients: &StageClients,
) -> Result<StageOutcome, PipelineError> {
    let providers = build_providers(cfg, clients)?;
    dispatch_stage(records, stage, cfg, &providers)
}

fn dispatch_stage(
    records: Vec<ManifestRecord>,
    stage: StageKind,
    cfg: &PipelineConfig,
    providers: &Providers,
) -> Result<StageOutcome, PipelineError> {
    Ok(match stage {
        StageKind::Prefilter => stage_prefilter(records, &cfg.geometry),
        StageKind::Score => stage_score(records, cfg, providers)?,
        StageKind::Filter => stage_filter(records, &cfg.filter),
        StageKind::CaptionValidate => {
            stage_caption_validate(records, &cfg.defects, cfg.caption_style)
        }
        StageKind::CaptionShuffle => stage_caption_shuffle(records, cfg.seed, cfg.caption_style),
        StageKind::CaptionRewrite => stage_caption_rewrite(records, cfg.caption_style),
        StageKind::Buckets | StageKind::WordStats => {
            StageOutcome { kept: records, ..StageOutcome::default() }
        }
    })
}

fn stage_prefilter(records: Vec<ManifestRecord>, geometry: &GeometryConfig) -> StageOutcome {
    let mut result = StageOutcome::default();
    for mut record in records {
        match (record.width, record.height) {
            (Some(w), Some(h)) => {
                let verdict = passes_prefilter(w, h, geometry);
                if verdict.passed {
                    result.kept.push(record);
                } else {
                    record.outcome = FilterOutcome::rejected(verdict.reasons);
                    result.rejected.push(record);
                }
            }
            _ => result.errors.push(StageRecordError {
                id: record.id.clone(),
                error: "missing width/height; cannot apply the geometry gate".into(),
            }),
        }
    }
    result
}

fn stage_score(
    records: Vec<ManifestRecord>,
    cfg: &PipelineConfig,
    providers: &Providers,
) -> Result<StageOutcome, PipelineError> {
    let outcomes = par_map_indexed(&records, cfg.workers, |_, record| {
        score_one(record, cfg, providers)
    });
    let mut result = StageOutcome::default();
    for outcome in outcomes {
        match outcome {
            ScoreWork::Done(record) => result.kept.push(*record),
            ScoreWork::Data { id, error } => result.errors.push(StageRecordError { id, error }),
            ScoreWork::Abort(message) => {
                return Err(PipelineError::Client { stage: "score".into(), message });
            }
        }
    }
    Ok(result)
}

/// Fill whatever scores a record is missing. A failing aesthetic backend
/// aborts the run (the backend is down for every record); a failing pixel
/// load or a malformed detector polygon is that record's own data error.
fn score_one(record: &ManifestRecord, cfg: &PipelineConfig, providers: &Providers) -> ScoreWork {
    let mut record = record.clone();
    let data = |record: &ManifestRecord, error: String| ScoreWork::Data {
        id: record.id.clone(),
        error,
    };

    if record.scores.aesthetic.is_none() {
        let Some(client) = &providers.aesthetic else {
            return ScoreWork::Abort(
                "a record is missing its aesthetic score and no aesthetic client, endpoint, \
                 or sidecar is configured"
                    .into(),
            );
        };
        match client.fetch(&record.id, &record.uri) {
            Ok(score) => record.scores.aesthetic = Some(score),
            Err(e) => return ScoreWork::Abort(format!("aesthetic provider failed: {e}")),
        }
    }

    if record.scores.luminance.is_none() {
        let (Some(w), Some(h)) = (record.width, record.height) else {
            return data(&record, "missing width/height; cannot compute luminance".into());
        };
        let Some(pixels) = &providers.pixels else {
            return ScoreWork::Abort(
                "a record is missing its luminance score and no pixel source is configured"
                    .into(),
            );
        };
        let buffer = match pixels.load(&record.id, &record.uri, (w, h)) {
            Ok(buffer) => buffer,
            Err(e) => return data(&record, format!("pixel load failed: {e}")),
        };
        if (buffer.width(), buffer.height()) != (w, h) {
            return data(
                &record,
                format!(
                    "image is {}x{} but the manifest says {w}x{h}",
                    buffer.width(),
                    buffer.height()
                ),
            );
        }
        let target = cfg.geometry.crop_target;
        let scored = if w >= target && h >= target {
            match buffer.center_crop(target) {
                Ok(crop) => crop,
                Err(e) => return data(&record, format!("center crop failed: {e}")),
            }
        } else {
            buffer
        };
        match luminance_score(scored.pixels().iter().copied()) {
            Ok(value) => record.scores.luminance = Some(value),
            Err(e) => return data(&record, format!("luminance failed: {e}")),
        }
    }

    if record.scores.ocr.is_none() {
        let Some(detector) = &providers.detector else {
            return ScoreWork::Abort(
                "a record is missing its OCR score and no text-detector sidecar is configured \
                 (an empty sidecar file asserts a no-text corpus)"
                    .into(),
            );
        };
        match ocr_score(detector.polygons(&record.id), &cfg.filter) {
            Ok(value) => record.scores.ocr = Some(value),
            Err(e) => return data(&record, format!("ocr score failed: {e}")),
        }
    }

    ScoreWork::Done(Box::new(record))
}

fn stage_filter(records: Vec<ManifestRecord>, filter: &FilterConfig) -> StageOutcome {
    let mut result = StageOutcome::default();
    for mut record in records {
        match keep_decision(&record.scores, filter) {
            Ok(outcome) if outcome.is_accepted() => {
                record.outcome = outcome;
                result.kept.push(record);
            }
            Ok(outcome) => {
                record.outcome = outcome;
                result.rejected.push(record);
            }
            Err(e) => result.errors.push(StageRecordError {
                id: record.id.clone(),
                error: e.to_string(),
            }),
        }
    }
    result
}

fn caption_text(record: &ManifestRecord, style: MarkerStyle) -> Option<String> {
    record
        .caption_raw
        .clone()
        .or_else(|| record.caption_slots.as_ref().map(|slots| render(slots, style)))
}

fn stage_caption_validate(
    records: Vec<ManifestRecord>,
    defects: &DefectConfig,
    style: MarkerStyle,
) -> StageOutcome {
    let mut result = StageOutcome::default();
    for mut record in records {
        let Some(text) = caption_text(&record, style) else {
            record.outcome = FilterOutcome::defective(vec![ReasonCode::CaptionMalformed]);
            result.rejected.push(record);
            continue;
        };
        let caption = match parse_caption(&text) {
            Ok((caption, _)) => caption,
            Err(report) => {
                record.outcome = FilterOutcome::defective(dedup_codes(report.reason_codes()));
                result.rejected.push(record);
                continue;
            }
        };
        let defect_report = detect_defect(&text, defects);
        if !defect_report.well_formed() {
            record.outcome = FilterOutcome::defective(dedup_codes(defect_report.reason_codes()));
            result.rejected.push(record);
            continue;
        }
        record.caption_slots = Some(caption);
        result.kept.push(record);
    }
    result
}

fn stage_caption_shuffle(records: Vec<ManifestRecord>, seed: u64, style: MarkerStyle) -> StageOutcome {
    let mut result = StageOutcome::default();
    for mut record in records {
        let Some(caption) = record.caption_slots.clone() else {
            result.errors.push(StageRecordError {
                id: record.id.clone(),
                error: "caption_shuffle requires validated caption slots".into(),
            });
            continue;
        };
        let g = random_permutation(seed, &record.id);
        record.caption_raw = Some(shuffle(&caption, g, style));
        record.permutation = Some(g);
        result.kept.push(record);
    }
    result
}

fn stage_caption_rewrite(records: Vec<ManifestRecord>, style: MarkerStyle) -> StageOutcome {
    let mut result = StageOutcome::default();
    for mut record in records {
        let Some(text) = caption_text(&record, style) else {
            result.errors.push(StageRecordError {
                id: record.id.clone(),
                error: "caption_rewrite requires caption text".into(),
            });
            continue;
        };
        match rewrite_markers(&text) {
            Ok(rewritten) => {
                record.caption_raw = Some(rewritten);
                result.kept.push(record);
            }
            Err(report) => result.errors.push(StageRecordError {
                id: record.id.clone(),
                error: format!("caption does not parse for marker rewriting: {report}"),
            }),
        }
    }
    result
}

/// Per-metric histogram report written by the buckets stage. A data-driven
/// request over a metric nobody carries produces an explicitly-empty stub
/// instead of inventing a range.
#[derive(Debug, Serialize, Deserialize)]
struct EmptyBucketReport {
    metric: String,
    empty: bool,
}

fn stage_buckets(
    records: &[ManifestRecord],
    requests: &[BucketRequest],
    out_dir: &Path,
    index: usize,
) -> Result<Vec<PathBuf>, PipelineError> {
    let mut written = Vec::new();
    for request in requests {
        let values: Vec<f64> =
            records.iter().filter_map(|record| request.metric.get(record)).collect();
        let json_path = out_dir.join(format!("{index:02}_buckets_{}.json", request.metric.name()));
        let table_path = out_dir.join(format!("{index:02}_buckets_{}.txt", request.metric.name()));
        let spec = match (request.low, request.high) {
            (Some(low), Some(high)) => Some(
                BucketSpec::new(low, high, request.k)
                    .expect("bucket ranges were validated with the config"),
            ),
            _ if values.is_empty() => None,
            _ => Some(
                BucketSpec::covering(request.k, values.iter().copied())
                    .expect("non-empty finite values always yield a range"),
            ),
        };
        let Some(spec) = spec else {
            let stub = EmptyBucketReport { metric: request.metric.name().into(), empty: true };
            atomic_write(&json_path, serde_json::to_string_pretty(&stub)?.as_bytes())?;
            atomic_write(&table_path, format!("metric: {}\n(no values)\n", request.metric.name()).as_bytes())?;
            written.push(json_path);
            written.push(table_path);
            continue;
        };
        let mut hist = BucketHistogram::new(spec, OverflowPolicy::Count);
        for value in values {
            hist.push(value).map_err(|e| {
                PipelineError::Manifest(ManifestError::InvalidRecord {
                    index: 0,
                    id: String::new(),
                    violations: vec![format!("bucket input: {e}")],
                })
            })?;
        }
        let report = hist.report(StdMode::Population).with_metric(request.metric.name());
        atomic_write(&json_path, serde_json::to_string_pretty(&report)?.as_bytes())?;
        atomic_write(&table_path, report.render_table().as_bytes())?;
        written.push(json_path);
        written.push(table_path);
    }
    Ok(written)
}

/// Word-frequency summary written by the word-stats stage.
#[derive(Debug, Serialize, Deserialize)]
struct WordStatsReport {
    records: u64,
    with_captions: u64,
    distinct_tokens: u64,
    top: Vec<TokenCount>,
}

#[derive(Debug, Serialize, Deserialize)]
struct TokenCount {
    token: String,
    count: u64,
}

fn stage_word_stats(
    records: &[ManifestRecord],
    style: MarkerStyle,
    out_dir: &Path,
    index: usize,
) -> Result<PathBuf, PipelineError> {
    let texts: Vec<String> =
        records.iter().filter_map(|record| caption_text(record, style)).collect();
    let frequency = word_frequency(texts.iter().map(String::as_str), default_stopwords());
    let report = WordStatsReport {
        records: records.len() as u64,
        with_captions: texts.len() as u64,
        distinct_tokens: frequency.len() as u64,
        top: frequency
            .top(50)
            .into_iter()
            .map(|(token, count)| TokenCount { token: token.into(), count })
            .collect(),
    };
    let path = out_dir.join(format!("{index:02}_word_stats.json"));
    atomic_write(&path, serde_json::to_string_pretty(&report)?.as_bytes())?;
    Ok(path)
}

// ---------------------------------------------------------------------------
// The run loop
// ---------------------------------------------------------------------------

fn manifest_bytes<'a, I>(records: I) -> Result<Vec<u8>, ManifestError>
where
    I: IntoIterator<Item = &'a ManifestRecord>,
{
    let mut bytes = Vec::new();
    write_manifest(records, &mut bytes)?;
    Ok(bytes)
}

fn build_providers(
    cfg: &PipelineConfig,
    clients: &StageClients,
) -> Result<Providers, PipelineError> {
    let aesthetic: Option<Arc<dyn AestheticClient>> = match (&clients.aesthetic, &cfg.aesthetic_sidecar) {
        (Some(client), _) => Some(Arc::new(CachedAesthetic::new(
            Arc::clone(client),
            RetryPolicy::default(),
        ))),
        (None, Some(path)) => {
            let sidecar = SidecarAesthetics::load(path).map_err(|e| PipelineError::Client {
                stage: "score".into(),
                message: e.to_string(),
            })?;
            Some(Arc::new(sidecar))
        }
        (None, None) => None,
    };
    let detector = match &cfg.detector_sidecar {
        Some(path) => Some(DetectorSidecar::load(path).map_err(|e| PipelineError::Client {
            stage: "score".into(),
            message: e.to_string(),
        })?),
        None => None,
    };
    Ok(Providers { aesthetic, pixels: clients.pixels.clone(), detector })
}

/// Load and verify an existing checkpoint for resumption. Returns `None`
/// when there is nothing to resume from.
fn load_checkpoint(
    path: &Path,
    config_digest: &str,
    input_digest: &str,
    out_dir: &Path,
    stages: &[StageKind],
) -> Result<Option<Checkpoint>, PipelineError> {
    if !path.is_file() {
        return Ok(None);
    }
    let text = std::fs::read_to_string(path)?;
    let checkpoint: Checkpoint = serde_json::from_str(&text)
        .map_err(|e| PipelineError::Checkpoint(format!("unreadable checkpoint: {e}")))?;
    if checkpoint.version != CHECKPOINT_VERSION {
        return Err(PipelineError::Checkpoint(format!(
            "checkpoint version {} is not {CHECKPOINT_VERSION}",
            checkpoint.version
        )));
    }
    if checkpoint.config_digest != config_digest {
        return Err(PipelineError::Checkpoint(
            "configuration changed since the checkpoint was written; rerun without resume".into(),
        ));
    }
    if checkpoint.input_digest != input_digest {
        return Err(PipelineError::Checkpoint(
            "input manifest changed since the checkpoint was written; rerun without resume".into(),
        ));
    }
    if checkpoint.completed.len() > stages.len() {
        return Err(PipelineError::Checkpoint(
            "checkpoint covers more stages than the configuration lists".into(),
        ));
    }
    for (position, done) in checkpoint.completed.iter().enumerate() {
        if stages[position] != done.stage {
            return Err(PipelineError::Checkpoint(format!(
                "checkpoint stage {} at position {position} does not match configured {}",
                done.stage.name(),
                stages[position].name()
            )));
        }
        let file = out_dir.join(&done.file);
        let digest = file_digest(&file)
            .map_err(|e| PipelineError::Checkpoint(format!("{}: {e}", done.file)))?;
        if digest != done.digest {
            return Err(PipelineError::Checkpoint(format!(
                "{} was modified after its stage completed; rerun without resume",
                done.file
            )));
        }
    }
    Ok(Some(checkpoint))
}

/// Run every configured stage over `input`, writing per-stage manifests,
/// reject files, reports, the stage logbook, and a resume checkpoint into
/// `out_dir`. Reruns with identical input, configuration, and seed produce
/// byte-identical outputs for any worker count.
pub fn run_pipeline(
    cfg: &PipelineConfig,
    input: &Path,
    out_dir: &Path,
    clients: &StageClients,
    resume: bool,
) -> Result<RunSummary, PipelineError> {
    let violations = validate_config(cfg);
    if !violations.is_empty() {
        return Err(PipelineError::Config(violations));
    }
    std::fs::create_dir_all(out_dir)?;
    let providers = build_providers(cfg, clients)?;

    let config_digest = sha256_hex(&serde_json::to_vec(cfg)?);
    let input_digest = file_digest(input)?;
    let checkpoint_path = out_dir.join("checkpoint.json");

    // Read and record-validate the input. Broken lines and invalid records
    // are data errors against the budget.
    let load = read_all_path(input, &ReadOptions {
        error_budget: cfg.error_budget as usize,
        check_duplicates: true,
    })?;
    let mut record_errors = load.line_errors.len() as u64;
    let mut current: Vec<ManifestRecord> = Vec::with_capacity(load.records.len());
    let mut input_errors: Vec<StageRecordError> = load
        .line_errors
        .iter()
        .map(|e| StageRecordError { id: format!("line {}", e.line), error: e.message.clone() })
        .collect();
    for record in load.records {
        match record.validate() {
            Ok(()) => current.push(record),
            Err(violations) => {
                record_errors += 1;
                input_errors.push(StageRecordError {
                    id: record.id.clone(),
                    error: violations.join("; "),
                });
            }
        }
    }
    if record_errors > cfg.error_budget {
        return Err(PipelineError::BudgetExceeded {
            stage: "input".into(),
            errors: record_errors,
            budget: cfg.error_budget,
        });
    }
    if !input_errors.is_empty() {
        atomic_write(
            &out_dir.join("00_input.errors.jsonl"),
            jsonl_bytes(&input_errors)?.as_slice(),
        )?;
    }

    // Resume bookkeeping.
    let mut logbook = StageLogbook::new();
    let mut completed: Vec<CompletedStage> = Vec::new();
    let mut resumed_stages = 0usize;
    if resume {
        if let Some(checkpoint) =
            load_checkpoint(&checkpoint_path, &config_digest, &input_digest, out_dir, &cfg.stages)?
        {
            resumed_stages = checkpoint.completed.len();
            if let Some(last) = checkpoint.completed.last() {
                let reloaded = read_all_path(
                    &out_dir.join(&last.file),
                    &ReadOptions { error_budget: 0, check_duplicates: true },
                )?;
                current = reloaded.records;
            }
            completed = checkpoint.completed;
            logbook = checkpoint.logbook;
            record_errors = checkpoint.record_errors;
        }
    }

    let mut reports: Vec<PathBuf> = Vec::new();
    for (position, stage) in cfg.stages.iter().enumerate().skip(completed.len()) {
        let index = position + 1;
        let stage_file = format!("{index:02}_{}.jsonl", stage.name());
        let in_count = current.len() as u64;

        let result = match stage {
            StageKind::Buckets => {
                let records = current;
                reports.extend(stage_buckets(&records, &cfg.buckets, out_dir, index)?);
                StageOutcome { kept: records, ..StageOutcome::default() }
            }
            StageKind::WordStats => {
                let records = current;
                reports.push(stage_word_stats(&records, cfg.caption_style, out_dir, index)?);
                StageOutcome { kept: records, ..StageOutcome::default() }
            }
            _ => dispatch_stage(current, *stage, cfg, &providers)?,
        };

        record_errors += result.errors.len() as u64;
        if !result.errors.is_empty() {
            atomic_write(
                &out_dir.join(format!("{index:02}_{}.errors.jsonl", stage.name())),
                jsonl_bytes(&result.errors)?.as_slice(),
            )?;
        }
        if record_errors > cfg.error_budget {
            return Err(PipelineError::BudgetExceeded {
                stage: stage.name().into(),
                errors: record_errors,
                budget: cfg.error_budget,
            });
        }

        if matches!(
            stage,
            StageKind::Prefilter | StageKind::Filter | StageKind::CaptionValidate
        ) {
            atomic_write(
                &out_dir.join(format!("{index:02}_{}.rejected.jsonl", stage.name())),
                manifest_bytes(&result.rejected)?.as_slice(),
            )?;
        }

        let manifest = manifest_bytes(&result.kept)?;
        let stage_path = out_dir.join(&stage_file);
        atomic_write(&stage_path, &manifest)?;

        logbook
            .record(stage.name(), in_count, result.kept.len() as u64)
            .expect("stage outputs never exceed inputs and chain by construction");
        current = result.kept;

        completed.push(CompletedStage {
            stage: *stage,
            file: stage_file,
            digest: sha256_hex(&manifest),
            records: current.len() as u64,
        });
        let checkpoint = Checkpoint {
            version: CHECKPOINT_VERSION,
            config_digest: config_digest.clone(),
            input_digest: input_digest.clone(),
            completed: completed.clone(),
            logbook: logbook.clone(),
            record_errors,
        };
        atomic_write(&checkpoint_path, serde_json::to_string_pretty(&checkpoint)?.as_bytes())?;
    }

    atomic_write(
        &out_dir.join("logbook.json"),
        serde_json::to_string_pretty(&logbook)?.as_bytes(),
    )?;
    atomic_write(&out_dir.join("logbook.txt"), logbook.render().as_bytes())?;

    let final_manifest = out_dir.join(
        &completed.last().expect("configs always list at least one stage").file,
    );
    Ok(RunSummary { logbook, final_manifest, reports, record_errors, resumed_stages })
}

fn jsonl_bytes<T: Serialize>(items: &[T]) -> Result<Vec<u8>, serde_json::Error> {
    let mut bytes = Vec::new();
    for item in items {
        bytes.extend_from_slice(serde_json::to_string(item)?.as_bytes());
        bytes.push(b'\n');
    }
    Ok(bytes)
}

impl From<serde_json::Error> for PipelineError {
    fn from(e: serde_json::Error) -> Self {
        PipelineError::Io(io::Error::new(io::ErrorKind::InvalidData, e))
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caption::canonicalize;
    use crate::manifest::write_manifest_path;
    use crate::scoring::ConstantAesthetic;
    use crate::synth::{synthetic_records, synthetic_records_bare, SyntheticPixels};

    fn write_input(dir: &Path, records: &[ManifestRecord]) -> PathBuf {
        let path = dir.join("input.jsonl");
        write_manifest_path(records.iter(), &path).unwrap();
        path
    }

    fn minimal_cfg(stages: Vec<StageKind>) -> PipelineConfig {
        PipelineConfig { stages, buckets: Vec::new(), ..PipelineConfig::default() }
    }

    // ---- configuration -----------------------------------------------------

    #[test]
    fn default_config_is_valid() {
        assert!(validate_config(&PipelineConfig::default()).is_empty());
    }

    #[test]
    fn violations_name_their_fields() {
        let mut cfg = PipelineConfig::default();
        cfg.filter.luminance_low = 204.0;
        cfg.filter.luminance_high = 12.75;
        cfg.geometry.aspect_threshold = 1.5;
        cfg.workers = 0;
        let violations = validate_config(&cfg);
        assert!(violations.iter().any(|v| v.contains("luminance_low")));
        assert!(violations.iter().any(|v| v.contains("aspect_threshold")));
        assert!(violations.iter().any(|v| v.contains("workers")));
    }

    #[test]
    fn stage_list_rules() {
        let cfg = minimal_cfg(vec![]);
        assert!(validate_config(&cfg).iter().any(|v| v.contains("must not be empty")));

        let cfg = minimal_cfg(vec![StageKind::Prefilter, StageKind::Prefilter]);
        assert!(validate_config(&cfg).iter().any(|v| v.contains("more than once")));

        let cfg = minimal_cfg(vec![StageKind::CaptionShuffle]);
        assert!(validate_config(&cfg).iter().any(|v| v.contains("caption_validate")));
    }

    #[test]
    fn bucket_request_rules() {
        let mut cfg = PipelineConfig::default();
        cfg.buckets = vec![BucketRequest {
            metric: MetricKind::Ocr,
            k: 10,
            low: Some(0.5),
            high: None,
        }];
        assert!(validate_config(&cfg).iter().any(|v| v.contains("both low and high")));
    }

    #[test]
    fn missing_sidecar_is_a_config_violation() {
        let mut cfg = PipelineConfig::default();
        cfg.aesthetic_sidecar = Some(PathBuf::from("/nonexistent/sidecar.jsonl"));
        assert!(validate_config(&cfg).iter().any(|v| v.contains("no such file")));
    }

    #[test]
    fn toml_roundtrip_preserves_config() {
        let cfg = PipelineConfig::default();
        let text = cfg.to_toml_string();
        let back = PipelineConfig::from_toml_str(&text).unwrap();
        assert_eq!(back, cfg);
        // A sparse file inherits defaults.
        let sparse = PipelineConfig::from_toml_str("seed = 7\nworkers = 2\n").unwrap();
        assert_eq!(sparse.seed, 7);
        assert_eq!(sparse.workers, 2);
        assert_eq!(sparse.filter, FilterConfig::default());
    }

    // ---- end-to-end ----------------------------------------------------------

    #[test]
    fn full_run_produces_consistent_funnel_and_files() {
        let dir = tempfile::tempdir().unwrap();
        let records = synthetic_records(120, 42);
        let input = write_input(dir.path(), &records);
        let out = dir.path().join("run");
        let cfg = PipelineConfig::default();

        let summary =
            run_pipeline(&cfg, &input, &out, &StageClients::default(), false).unwrap();

        // Funnel is chained and nonincreasing; first input is the corpus.
        let entries = summary.logbook.entries();
        assert_eq!(entries.len(), cfg.stages.len());
        assert_eq!(entries[0].input, 120);
        for pair in entries.windows(2) {
            assert_eq!(pair[0].output, pair[1].input);
            assert!(pair[1].output <= pair[1].input);
        }

        // Every surviving record is accepted with a validated caption.
        let survivors = read_all_path(
            &summary.final_manifest,
            &ReadOptions { error_budget: 0, check_duplicates: true },
        )
        .unwrap();
        assert_eq!(survivors.records.len() as u64, summary.logbook.final_output().unwrap());
        assert!(!survivors.records.is_empty(), "a 120-record corpus should have survivors");
        for record in &survivors.records {
            assert!(record.outcome.is_accepted());
            assert!(record.caption_slots.is_some());
        }

        // Stage files, reject files, reports, logbook all exist.
        for name in [
            "01_prefilter.jsonl",
            "01_prefilter.rejected.jsonl",
            "02_score.jsonl",
            "03_filter.jsonl",
            "03_filter.rejected.jsonl",
            "04_caption_validate.jsonl",
            "04_caption_validate.rejected.jsonl",
            "05_buckets_luminance.json",
            "05_buckets_aesthetic.json",
            "05_buckets_ocr.json",
            "06_word_stats.json",
            "logbook.json",
            "logbook.txt",
            "checkpoint.json",
        ] {
            assert!(out.join(name).is_file(), "{name} missing");
        }

        // Reject files carry statuses and reasons.
        let rejected = read_all_path(
            &out.join("03_filter.rejected.jsonl"),
            &ReadOptions { error_budget: 0, check_duplicates: true },
        )
        .unwrap();
        assert!(rejected.records.iter().all(|r| r.outcome.is_rejected()));
        assert!(rejected.records.iter().all(|r| !r.outcome.reasons.is_empty()));
    }

    #[test]
    fn reruns_are_byte_identical() {
        let dir = tempfile::tempdir().unwrap();
        let records = synthetic_records(80, 7);
        let input = write_input(dir.path(), &records);
        let cfg = PipelineConfig::default();

        let a = run_pipeline(&cfg, &input, &dir.path().join("a"), &StageClients::default(), false)
            .unwrap();
        let b = run_pipeline(&cfg, &input, &dir.path().join("b"), &StageClients::default(), false)
            .unwrap();
        assert_eq!(
            file_digest(&a.final_manifest).unwrap(),
            file_digest(&b.final_manifest).unwrap()
        );
        for name in ["logbook.json", "05_buckets_luminance.json", "06_word_stats.json"] {
            assert_eq!(
                file_digest(&dir.path().join("a").join(name)).unwrap(),
                file_digest(&dir.path().join("b").join(name)).unwrap(),
                "{name} differs between identical runs"
            );
        }
    }

    #[test]
    fn worker_counts_do_not_change_output_bytes() {
        let dir = tempfile::tempdir().unwrap();
        // Bare records force the score stage to do real per-record work.
        let records = synthetic_records_bare(60, 13);
        let input = write_input(dir.path(), &records);
        let detector = dir.path().join("detector.jsonl");
        std::fs::write(
            &detector,
            crate::synth::detector_sidecar_lines(&records, 736.0, 13).join("\n") + "\n",
        )
        .unwrap();

        let clients = StageClients {
            aesthetic: Some(Arc::new(ConstantAesthetic(5.5))),
            pixels: Some(Arc::new(SyntheticPixels::new(99))),
        };
        let mut digests = Vec::new();
        for workers in [1usize, 8] {
            let cfg = PipelineConfig {
                workers,
                detector_sidecar: Some(detector.clone()),
                ..minimal_cfg(vec![StageKind::Prefilter, StageKind::Score, StageKind::Filter])
            };
            let out = dir.path().join(format!("w{workers}"));
            let summary = run_pipeline(&cfg, &input, &out, &clients, false).unwrap();
            digests.push(file_digest(&summary.final_manifest).unwrap());
        }
        assert_eq!(digests[0], digests[1]);
    }

    #[test]
    fn empty_input_yields_empty_output_and_zero_rows() {
        let dir = tempfile::tempdir().unwrap();
        let input = write_input(dir.path(), &[]);
        let cfg = PipelineConfig::default();
        let summary = run_pipeline(
            &cfg,
            &input,
            &dir.path().join("out"),
            &StageClients::default(),
            false,
        )
        .unwrap();
        assert_eq!(summary.logbook.entries().len(), cfg.stages.len());
        assert!(summary.logbook.entries().iter().all(|e| e.input == 0 && e.output == 0));
        let bytes = std::fs::read(&summary.final_manifest).unwrap();
        assert!(bytes.is_empty());
    }

    #[test]
    fn broken_lines_respect_the_error_budget() {
        let dir = tempfile::tempdir().unwrap();
        let records = synthetic_records(10, 3);
        let input = dir.path().join("input.jsonl");
        let mut bytes = manifest_bytes(records.iter()).unwrap();
        bytes.extend_from_slice(b"{not json\n");
        std::fs::write(&input, bytes).unwrap();

        let strict = PipelineConfig::default();
        let err = run_pipeline(
            &strict,
            &input,
            &dir.path().join("strict"),
            &StageClients::default(),
            false,
        )
        .unwrap_err();
        assert_eq!(err.exit_code(), 2);

        let lenient = PipelineConfig { error_budget: 1, ..PipelineConfig::default() };
        let summary = run_pipeline(
            &lenient,
            &input,
            &dir.path().join("lenient"),
            &StageClients::default(),
            false,
        )
        .unwrap();
        assert_eq!(summary.record_errors, 1);
        assert!(dir.path().join("lenient").join("00_input.errors.jsonl").is_file());
    }

    #[test]
    fn missing_scores_at_filter_are_data_errors() {
        let dir = tempfile::tempdir().unwrap();
        let records = synthetic_records_bare(5, 1);
        let input = write_input(dir.path(), &records);
        let cfg = minimal_cfg(vec![StageKind::Filter]);
        let err = run_pipeline(
            &cfg,
            &input,
            &dir.path().join("out"),
            &StageClients::default(),
            false,
        )
        .unwrap_err();
        assert!(matches!(err, PipelineError::BudgetExceeded { .. }), "got {err:?}");
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn missing_aesthetic_provider_is_a_client_failure() {
        let dir = tempfile::tempdir().unwrap();
        let records = synthetic_records_bare(5, 1);
        let input = write_input(dir.path(), &records);
        let cfg = minimal_cfg(vec![StageKind::Score]);
        let err = run_pipeline(
            &cfg,
            &input,
            &dir.path().join("out"),
            &StageClients::default(),
            false,
        )
        .unwrap_err();
        assert!(matches!(err, PipelineError::Client { .. }), "got {err:?}");
        assert_eq!(err.exit_code(), 3);
    }

    #[test]
    fn resume_skips_completed_stages_and_finishes_the_run() {
        let dir = tempfile::tempdir().unwrap();
        let records = synthetic_records_bare(30, 21);
        let input = write_input(dir.path(), &records);
        let detector = dir.path().join("detector.jsonl");
        std::fs::write(
            &detector,
            crate::synth::detector_sidecar_lines(&records, 736.0, 21).join("\n") + "\n",
        )
        .unwrap();
        let cfg = PipelineConfig {
            detector_sidecar: Some(detector),
            ..minimal_cfg(vec![StageKind::Prefilter, StageKind::Score, StageKind::Filter])
        };
        let out = dir.path().join("out");

        // First attempt dies at the score stage: no aesthetic provider.
        let err =
            run_pipeline(&cfg, &input, &out, &StageClients::default(), false).unwrap_err();
        assert_eq!(err.exit_code(), 3);
        assert!(out.join("01_prefilter.jsonl").is_file());

        // Resumption with providers picks up after prefilter.
        let clients = StageClients {
            aesthetic: Some(Arc::new(ConstantAesthetic(6.0))),
            pixels: Some(Arc::new(SyntheticPixels::new(4))),
        };
        let summary = run_pipeline(&cfg, &input, &out, &clients, true).unwrap();
        assert_eq!(summary.resumed_stages, 1);
        assert_eq!(summary.logbook.entries().len(), 3);
        assert!(summary.logbook.final_output().unwrap() > 0);
    }

    #[test]
    fn resume_rejects_changed_config() {
        let dir = tempfile::tempdir().unwrap();
        let records = synthetic_records(10, 2);
        let input = write_input(dir.path(), &records);
        let out = dir.path().join("out");
        let cfg = minimal_cfg(vec![StageKind::Prefilter]);
        run_pipeline(&cfg, &input, &out, &StageClients::default(), false).unwrap();

        let changed = PipelineConfig { seed: 999, ..cfg };
        let err =
            run_pipeline(&changed, &input, &out, &StageClients::default(), true).unwrap_err();
        assert!(matches!(err, PipelineError::Checkpoint(_)), "got {err:?}");
    }

    #[test]
    fn shuffle_stage_records_recoverable_permutations() {
        let dir = tempfile::tempdir().unwrap();
        let records = synthetic_records(40, 31);
        let input = write_input(dir.path(), &records);
        let cfg = PipelineConfig {
            seed: 17,
            ..minimal_cfg(vec![StageKind::CaptionValidate, StageKind::CaptionShuffle])
        };
        let summary = run_pipeline(
            &cfg,
            &input,
            &dir.path().join("out"),
            &StageClients::default(),
            false,
        )
        .unwrap();
        let survivors = read_all_path(
            &summary.final_manifest,
            &ReadOptions { error_budget: 0, check_duplicates: true },
        )
        .unwrap();
        assert!(!survivors.records.is_empty());
        for record in &survivors.records {
            let g = record.permutation.expect("shuffle stage sets the permutation");
            let shuffled = record.caption_raw.as_ref().unwrap();
            let recovered = canonicalize(shuffled, g).unwrap();
            assert_eq!(&recovered, record.caption_slots.as_ref().unwrap());
        }
    }

    #[test]
    fn rewrite_stage_moves_captions_to_tilde_markers() {
        let dir = tempfile::tempdir().unwrap();
        let records = synthetic_records(20, 5);
        let input = write_input(dir.path(), &records);
        let cfg = minimal_cfg(vec![StageKind::CaptionValidate, StageKind::CaptionRewrite]);
        let summary = run_pipeline(
            &cfg,
            &input,
            &dir.path().join("out"),
            &StageClients::default(),
            false,
        )
        .unwrap();
        let survivors = read_all_path(
            &summary.final_manifest,
            &ReadOptions { error_budget: 0, check_duplicates: true },
        )
        .unwrap();
        assert!(!survivors.records.is_empty());
        for record in &survivors.records {
            let text = record.caption_raw.as_ref().unwrap();
            assert!(text.starts_with("~1~ "), "rewritten caption: {text}");
            let (_, style) = parse_caption(text).unwrap();
            assert_eq!(style, MarkerStyle::Tilde);
        }
    }

    #[test]
    fn defective_captions_leave_through_the_reject_file() {
        let dir = tempfile::tempdir().unwrap();
        // Seed chosen arbitrarily; with 200 records the ~6% defect injection
        // makes at least one defective caption overwhelmingly likely.
        let records = synthetic_records(200, 2024);
        let input = write_input(dir.path(), &records);
        let cfg = minimal_cfg(vec![StageKind::CaptionValidate]);
        let summary = run_pipeline(
            &cfg,
            &input,
            &dir.path().join("out"),
            &StageClients::default(),
            false,
        )
        .unwrap();
        let rejected = read_all_path(
            &dir.path().join("out").join("01_caption_validate.rejected.jsonl"),
            &ReadOptions { error_budget: 0, check_duplicates: true },
        )
        .unwrap();
        assert!(!rejected.records.is_empty(), "expected some defective captions");
        assert!(rejected.records.iter().all(|r| !r.outcome.reasons.is_empty()));
        let survivors = summary.logbook.final_output().unwrap();
        assert_eq!(survivors + rejected.records.len() as u64, 200);
    }
}
