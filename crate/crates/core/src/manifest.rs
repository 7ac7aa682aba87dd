//! Record data model and line-oriented manifest persistence.
//!
//! A manifest is UTF-8 text with one JSON object per line, in a fixed field
//! order, so that equal record sequences always serialize to equal bytes —
//! stage outputs diff cleanly and reruns can be compared by digest. Optional
//! fields are omitted entirely when absent (never written as `null`), and a
//! record that has not been judged yet omits its `status`/`reasons` fields.
//!
//! Reading is streaming and tolerant: malformed lines are reported with
//! their line number and offending fragment instead of aborting, up to a
//! configurable error budget (default 0 — any bad line is fatal unless the
//! caller opts into a dirtier corpus).

use std::collections::HashSet;
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::caption::{Permutation4, StructuredCaption};

// ---------------------------------------------------------------------------
// Reason codes and filter outcomes
// ---------------------------------------------------------------------------

/// Why a record was rejected or marked defective.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReasonCode {
    /// Width or height below the minimum side.
    MinSize,
    /// min(w/h, h/w) below the aspect threshold.
    AspectRatio,
    /// Aesthetic score at or below the strict lower bound.
    Aesthetic,
    /// Luminance below the inclusive band.
    LuminanceLow,
    /// Luminance above the inclusive band.
    LuminanceHigh,
    /// Text-coverage score inside the discard band (enough text to distract,
    /// not enough to be legible).
    OcrIntermediate,
    /// Caption violates the four-slot template.
    CaptionMalformed,
    /// Caption shows a repetition loop.
    CaptionRepetition,
    /// Caption exceeds the length cap.
    CaptionOverlength,
}

impl ReasonCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ReasonCode::MinSize => "min_size",
            ReasonCode::AspectRatio => "aspect_ratio",
            ReasonCode::Aesthetic => "aesthetic",
            ReasonCode::LuminanceLow => "luminance_low",
            ReasonCode::LuminanceHigh => "luminance_high",
            ReasonCode::OcrIntermediate => "ocr_intermediate",
            ReasonCode::CaptionMalformed => "caption_malformed",
            ReasonCode::CaptionRepetition => "caption_repetition",
            ReasonCode::CaptionOverlength => "caption_overlength",
        }
    }
}

impl fmt::Display for ReasonCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Where a record stands in the pipeline.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterStatus {
    /// Not yet judged (the default; omitted on the wire).
    #[default]
    Pending,
    /// Passed every filter it has been through.
    Accepted,
    /// Failed a filter; see `reasons`.
    Rejected,
    /// Caption-level defect; see `reasons`.
    Defective,
}

impl FilterStatus {
    fn is_pending(&self) -> bool {
        matches!(self, FilterStatus::Pending)
    }
}

impl fmt::Display for FilterStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            FilterStatus::Pending => "pending",
            FilterStatus::Accepted => "accepted",
            FilterStatus::Rejected => "rejected",
            FilterStatus::Defective => "defective",
        })
    }
}

/// A status plus the reasons that justify it. Flattened into the manifest
/// line as the `status` and `reasons` fields.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct FilterOutcome {
    #[serde(default, skip_serializing_if = "FilterStatus::is_pending")]
    pub status: FilterStatus,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub reasons: Vec<ReasonCode>,
}

impl FilterOutcome {
    pub fn pending() -> Self {
        Self::default()
    }

    pub fn accepted() -> Self {
        FilterOutcome { status: FilterStatus::Accepted, reasons: Vec::new() }
    }

    pub fn rejected(reasons: Vec<ReasonCode>) -> Self {
        FilterOutcome { status: FilterStatus::Rejected, reasons }
    }

    pub fn defective(reasons: Vec<ReasonCode>) -> Self {
        FilterOutcome { status: FilterStatus::Defective, reasons }
    }

    pub fn is_accepted(&self) -> bool {
        self.status == FilterStatus::Accepted
    }

    pub fn is_rejected(&self) -> bool {
        self.status == FilterStatus::Rejected
    }

    pub fn is_pending(&self) -> bool {
        self.status == FilterStatus::Pending
    }

    fn collect_violations(&self, out: &mut Vec<String>) {
        match self.status {
            FilterStatus::Rejected | FilterStatus::Defective if self.reasons.is_empty() => {
                out.push(format!("status {} requires at least one reason", self.status));
            }
            FilterStatus::Pending | FilterStatus::Accepted if !self.reasons.is_empty() => {
                out.push(format!("status {} must not carry reasons", self.status));
            }
            _ => {}
        }
    }
}

// ---------------------------------------------------------------------------
// Scores
// ---------------------------------------------------------------------------

/// The three scalar quality scores, each optional until its stage has run.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ScoreSet {
    /// Human-preference estimate from the external scorer (observed range
    /// roughly 1.75–7.75).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aesthetic: Option<f64>,
    /// Mean weighted brightness over the (cropped) pixels, in [0, 255].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub luminance: Option<f64>,
    /// Confidence-weighted fraction of the detector frame covered by text
    /// polygons; ≥ 0 and unclamped (overlaps double-count).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ocr: Option<f64>,
}

impl ScoreSet {
    pub fn is_empty(&self) -> bool {
        self.aesthetic.is_none() && self.luminance.is_none() && self.ocr.is_none()
    }

    /// True when all three scores are present.
    pub fn is_complete(&self) -> bool {
        self.aesthetic.is_some() && self.luminance.is_some() && self.ocr.is_some()
    }

    fn collect_violations(&self, out: &mut Vec<String>) {
        if let Some(a) = self.aesthetic {
            if !a.is_finite() {
                out.push(format!("aesthetic score is not finite: {a}"));
            }
        }
        if let Some(l) = self.luminance {
            if !l.is_finite() || !(0.0..=255.0).contains(&l) {
                out.push(format!("luminance score outside [0, 255]: {l}"));
            }
        }
        if let Some(o) = self.ocr {
            if !o.is_finite() || o < 0.0 {
                out.push(format!("ocr score must be finite and >= 0: {o}"));
            }
        }
    }
}

// ---------------------------------------------------------------------------
// ManifestRecord
// ---------------------------------------------------------------------------

/// One image–caption pair: the unit that flows through every stage.
///
/// Field order here is the wire order; serialization follows declaration
/// order, which keeps output byte-deterministic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    /// Unique, non-empty identifier within a manifest.
    pub id: String,
    /// Image locator; never dereferenced by this crate itself.
    pub uri: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<u32>,
    /// Raw caption text as produced by a captioner (possibly shuffled or
    /// rewritten downstream).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_raw: Option<String>,
    /// Parsed four-slot caption, once validation has run.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption_slots: Option<StructuredCaption>,
    /// Slot permutation applied at shuffle time; required to recover slot
    /// identity from a shuffled `caption_raw`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub permutation: Option<Permutation4>,
    #[serde(default, skip_serializing_if = "ScoreSet::is_empty")]
    pub scores: ScoreSet,
    #[serde(flatten)]
    pub outcome: FilterOutcome,
}

impl ManifestRecord {
    /// A fresh, pending record with nothing but its identity.
    pub fn new(id: impl Into<String>, uri: impl Into<String>) -> Self {
        ManifestRecord {
            id: id.into(),
            uri: uri.into(),
            width: None,
            height: None,
            caption_raw: None,
            caption_slots: None,
            permutation: None,
            scores: ScoreSet::default(),
            outcome: FilterOutcome::pending(),
        }
    }

    /// Check every record-level invariant; `Err` carries all violations.
    pub fn validate(&self) -> Result<(), Vec<String>> {
        let mut out = Vec::new();
        if self.id.is_empty() {
            out.push("id must be non-empty".into());
        }
        if self.width.is_some() != self.height.is_some() {
            out.push("width and height must be present together".into());
        }
        if self.scores.luminance.is_some() && self.width.is_none() {
            out.push("luminance is a pixel score; records carrying it need dimensions".into());
        }
        if self.permutation.is_some() && self.caption_slots.is_none() {
            out.push("permutation without caption_slots cannot be inverted".into());
        }
        self.scores.collect_violations(&mut out);
        self.outcome.collect_violations(&mut out);
        if out.is_empty() {
            Ok(())
        } else {
            Err(out)
        }
    }
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// A single unreadable manifest line: its 1-based line number, a truncated
/// copy of the offending text, and what went wrong.
#[derive(Debug, Clone)]
pub struct LineError {
    pub line: usize,
    pub fragment: String,
    pub message: String,
}

const FRAGMENT_LIMIT: usize = 120;

fn truncate_fragment(line: &str) -> String {
    if line.chars().count() <= FRAGMENT_LIMIT {
        line.to_string()
    } else {
        let cut: String = line.chars().take(FRAGMENT_LIMIT).collect();
        format!("{cut}…")
    }
}

impl fmt::Display for LineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}: {} | {}", self.line, self.message, self.fragment)
    }
}

/// Errors from manifest I/O and validation.
#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("i/o: {0}")]
    Io(#[from] io::Error),
    #[error("{count} parse error(s) exceed the budget of {budget}; first: {first}",
            count = errors.len(), first = &errors[0])]
    BudgetExceeded { budget: usize, errors: Vec<LineError> },
    #[error("duplicate record ids: {}", ids.join(", "))]
    DuplicateIds { ids: Vec<String> },
    #[error("record {index} (id {id:?}) violates invariants: {}", violations.join("; "))]
    InvalidRecord { index: usize, id: String, violations: Vec<String> },
    #[error("record {id:?} failed to serialize: {source}")]
    Serialize { id: String, source: serde_json::Error },
}

// ---------------------------------------------------------------------------
// Reading
// ---------------------------------------------------------------------------

/// Streaming manifest reader: yields one record or one [`LineError`] per
/// input line, in file order. I/O failures surface as an error line and end
/// the stream.
pub struct ManifestReader<R> {
    lines: io::Lines<BufReader<R>>,
    line_no: usize,
    io_failed: bool,
}

impl<R: Read> ManifestReader<R> {
    pub fn new(source: R) -> Self {
        ManifestReader { lines: BufReader::new(source).lines(), line_no: 0, io_failed: false }
    }
}

impl<R: Read> Iterator for ManifestReader<R> {
    type Item = Result<ManifestRecord, LineError>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.io_failed {
            return None;
        }
        let line = match self.lines.next()? {
            Ok(line) => line,
            Err(e) => {
                self.io_failed = true;
                return Some(Err(LineError {
                    line: self.line_no + 1,
                    fragment: String::new(),
                    message: format!("i/o: {e}"),
                }));
            }
        };
        self.line_no += 1;
        match serde_json::from_str::<ManifestRecord>(&line) {
            Ok(record) => Some(Ok(record)),
            Err(e) => Some(Err(LineError {
                line: self.line_no,
                fragment: truncate_fragment(&line),
                message: e.to_string(),
            })),
        }
    }
}

/// Lazily read records from a line-delimited source.
pub fn read_manifest<R: Read>(source: R) -> ManifestReader<R> {
    ManifestReader::new(source)
}

/// Options for [`read_all`].
#[derive(Debug, Clone)]
pub struct ReadOptions {
    /// How many malformed lines to tolerate before giving up.
    pub error_budget: usize,
    /// Whether to reject manifests containing duplicate record ids.
    pub check_duplicates: bool,
}

impl Default for ReadOptions {
    fn default() -> Self {
        ReadOptions { error_budget: 0, check_duplicates: true }
    }
}

/// A fully loaded manifest: the good records plus any tolerated line errors.
#[derive(Debug, Default)]
pub struct ManifestLoad {
    pub records: Vec<ManifestRecord>,
    pub line_errors: Vec<LineError>,
}

/// Read an entire manifest, collecting parse errors up to the budget.
///
/// Aborts as soon as the budget is exceeded (carrying every error seen so
/// far), and reports duplicate ids — listed once each, in order of first
/// re-occurrence — when the check is enabled.
pub fn read_all<R: Read>(source: R, opts: &ReadOptions) -> Result<ManifestLoad, ManifestError> {
    let mut load = ManifestLoad::default();
    for item in read_manifest(source) {
        match item {
            Ok(record) => load.records.push(record),
            Err(err) => {
                load.line_errors.push(err);
                if load.line_errors.len() > opts.error_budget {
                    return Err(ManifestError::BudgetExceeded {
                        budget: opts.error_budget,
                        errors: load.line_errors,
                    });
                }
            }
        }
    }
    if opts.check_duplicates {
        let mut seen: HashSet<&str> = HashSet::with_capacity(load.records.len());
        let mut dups: Vec<String> = Vec::new();
        for record in &load.records {
            if !seen.insert(&record.id) && !dups.iter().any(|d| d == &record.id) {
                dups.push(record.id.clone());
            }
        }
        if !dups.is_empty() {
            return Err(ManifestError::DuplicateIds { ids: dups });
        }
    }
    Ok(load)
}

/// [`read_all`] over a file path.
pub fn read_all_path(path: &Path, opts: &ReadOptions) -> Result<ManifestLoad, ManifestError> {
    let file = File::open(path)?;
    read_all(file, opts)
}

// ---------------------------------------------------------------------------
// Writing
// ---------------------------------------------------------------------------

/// Write records as line-delimited JSON, one per line, validating each
/// record first. Returns the number of records written. Output is
/// byte-deterministic for equal input.
pub fn write_manifest<'a, W, I>(records: I, sink: W) -> Result<usize, ManifestError>
where
    W: Write,
    I: IntoIterator<Item = &'a ManifestRecord>,
{
    let mut out = BufWriter::new(sink);
    let mut count = 0usize;
    for record in records {
        if let Err(violations) = record.validate() {
            return Err(ManifestError::InvalidRecord {
                index: count,
                id: record.id.clone(),
                violations,
            });
        }
        let line = serde_json::to_string(record)
            .map_err(|source| ManifestError::Serialize { id: record.id.clone(), source })?;
        out.write_all(line.as_bytes())?;
        out.write_all(b"\n")?;
        count += 1;
    }
    out.flush()?;
    Ok(count)
}

/// [`write_manifest`] to a file path.
pub fn write_manifest_path<'a, I>(records: I, path: &Path) -> Result<usize, ManifestError>
where
    I: IntoIterator<Item = &'a ManifestRecord>,
{
    let file = File::create(path)?;
    write_manifest(records, file)
}

/// SHA-256 of a file's bytes, lowercase hex — the digest used to compare
/// stage outputs across reruns and worker counts.
pub fn file_digest(path: &Path) -> io::Result<String> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    io::copy(&mut file, &mut hasher)?;
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn sample_record() -> ManifestRecord {
        let mut r = ManifestRecord::new("a", "file:///img/a.png");
        r.width = Some(1024);
        r.height = Some(1024);
        r
    }

    #[test]
    fn minimal_line_roundtrips() {
        let r = sample_record();
        let line = serde_json::to_string(&r).unwrap();
        assert_eq!(line, r#"{"id":"a","uri":"file:///img/a.png","width":1024,"height":1024}"#);
        let back: ManifestRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
    }

    #[test]
    fn optional_fields_omitted_not_null() {
        let r = ManifestRecord::new("x", "u");
        let line = serde_json::to_string(&r).unwrap();
        assert!(!line.contains("null"), "absent fields must be omitted: {line}");
        assert!(!line.contains("scores"));
        assert!(!line.contains("status"));
        assert!(!line.contains("reasons"));
    }

    #[test]
    fn full_record_roundtrips() {
        let mut r = sample_record();
        r.caption_raw = Some("1. a 2. b 3. c 4. d".into());
        r.caption_slots = Some(StructuredCaption::new("a", "b", "c", "d").unwrap());
        r.permutation = Some(Permutation4::new([2, 1, 4, 3]).unwrap());
        r.scores = ScoreSet { aesthetic: Some(5.03), luminance: Some(120.0), ocr: Some(0.01) };
        r.outcome = FilterOutcome::accepted();
        let line = serde_json::to_string(&r).unwrap();
        let back: ManifestRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back, r);
        // Wire field names are part of the contract.
        for key in ["caption_raw", "caption_slots", "permutation", "scores", "status"] {
            assert!(line.contains(&format!("\"{key}\"")), "missing {key} in {line}");
        }
    }

    #[test]
    fn rejected_outcome_roundtrips() {
        let mut r = sample_record();
        r.outcome =
            FilterOutcome::rejected(vec![ReasonCode::Aesthetic, ReasonCode::LuminanceHigh]);
        let line = serde_json::to_string(&r).unwrap();
        assert!(line.contains(r#""status":"rejected""#));
        assert!(line.contains(r#""reasons":["aesthetic","luminance_high"]"#));
        let back: ManifestRecord = serde_json::from_str(&line).unwrap();
        assert_eq!(back.outcome, r.outcome);
    }

    #[test]
    fn empty_stream_reads_empty() {
        let load = read_all(io::empty(), &ReadOptions::default()).unwrap();
        assert!(load.records.is_empty());
        assert!(load.line_errors.is_empty());
    }

    #[test]
    fn truncated_line_is_reported_with_line_number() {
        let text = concat!(
            r#"{"id":"a","uri":"u"}"#, "\n",
            r#"{"id":"b","uri":"#, "\n",
            r#"{"id":"c","uri":"u"}"#, "\n",
        );
        let opts = ReadOptions { error_budget: 1, check_duplicates: true };
        let load = read_all(text.as_bytes(), &opts).unwrap();
        assert_eq!(load.records.len(), 2);
        assert_eq!(load.records[0].id, "a");
        assert_eq!(load.records[1].id, "c");
        assert_eq!(load.line_errors.len(), 1);
        assert_eq!(load.line_errors[0].line, 2);
        assert!(load.line_errors[0].fragment.starts_with(r#"{"id":"b""#));
    }

    #[test]
    fn budget_zero_rejects_any_bad_line() {
        let text = "{\"id\":\"a\",\"uri\":\"u\"}\nnot json\n";
        let err = read_all(text.as_bytes(), &ReadOptions::default()).unwrap_err();
        match err {
            ManifestError::BudgetExceeded { budget, errors } => {
                assert_eq!(budget, 0);
                assert_eq!(errors.len(), 1);
                assert_eq!(errors[0].line, 2);
            }
            other => panic!("expected budget error, got {other}"),
        }
    }

    #[test]
    fn duplicate_ids_listed_once_each() {
        let text = concat!(
            r#"{"id":"a","uri":"u"}"#, "\n",
            r#"{"id":"b","uri":"u"}"#, "\n",
            r#"{"id":"a","uri":"u"}"#, "\n",
            r#"{"id":"a","uri":"u"}"#, "\n",
        );
        let err = read_all(text.as_bytes(), &ReadOptions::default()).unwrap_err();
        match err {
            ManifestError::DuplicateIds { ids } => assert_eq!(ids, vec!["a".to_string()]),
            other => panic!("expected duplicate error, got {other}"),
        }
    }

    #[test]
    fn write_validates_records() {
        let mut r = sample_record();
        r.outcome = FilterOutcome::rejected(Vec::new()); // rejected needs reasons
        let err = write_manifest([&r], io::sink()).unwrap_err();
        assert!(matches!(err, ManifestError::InvalidRecord { .. }));
    }

    #[test]
    fn write_is_byte_deterministic() {
        let records: Vec<ManifestRecord> = (0..100)
            .map(|i| {
                let mut r = ManifestRecord::new(format!("id-{i}"), format!("uri-{i}"));
                r.width = Some(1000 + i);
                r.height = Some(2000 - i);
                r.scores.aesthetic = Some(4.0 + f64::from(i) * 0.01);
                r
            })
            .collect();
        let mut a = Vec::new();
        let mut b = Vec::new();
        assert_eq!(write_manifest(records.iter(), &mut a).unwrap(), 100);
        assert_eq!(write_manifest(records.iter(), &mut b).unwrap(), 100);
        assert_eq!(a, b);
    }

    #[test]
    fn invalid_score_ranges_rejected() {
        let mut r = sample_record();
        r.scores.luminance = Some(300.0);
        assert!(r.validate().is_err());
        r.scores.luminance = Some(120.0);
        r.scores.ocr = Some(-0.5);
        assert!(r.validate().is_err());
    }

    #[test]
    fn pixel_score_requires_dimensions() {
        let mut r = ManifestRecord::new("a", "u");
        r.scores.luminance = Some(100.0);
        let violations = r.validate().unwrap_err();
        assert!(violations.iter().any(|v| v.contains("dimensions")));
    }

    #[test]
    fn permutation_requires_slots() {
        let mut r = sample_record();
        r.permutation = Some(Permutation4::identity());
        assert!(r.validate().is_err());
        r.caption_slots = Some(StructuredCaption::new("a", "b", "c", "d").unwrap());
        assert!(r.validate().is_ok());
    }

    #[test]
    fn digest_detects_any_byte_change() {
        let dir = tempfile::tempdir().unwrap();
        let p1 = dir.path().join("a.jsonl");
        let p2 = dir.path().join("b.jsonl");
        std::fs::write(&p1, "hello\n").unwrap();
        std::fs::write(&p2, "hello\n").unwrap();
        assert_eq!(file_digest(&p1).unwrap(), file_digest(&p2).unwrap());
        std::fs::write(&p2, "hello!\n").unwrap();
        assert_ne!(file_digest(&p1).unwrap(), file_digest(&p2).unwrap());
    }

    // ---- property tests -------------------------------------------------

    fn score_strategy() -> impl Strategy<Value = ScoreSet> {
        (
            proptest::option::of(1.0f64..8.0),
            proptest::option::of(0.0f64..=255.0),
            proptest::option::of(0.0f64..2.0),
        )
            .prop_map(|(aesthetic, luminance, ocr)| ScoreSet { aesthetic, luminance, ocr })
    }

    fn record_strategy() -> impl Strategy<Value = ManifestRecord> {
        (
            "[a-z0-9]{1,12}",
            "[a-z0-9:/._-]{1,24}",
            proptest::option::of((16u32..4096, 16u32..4096)),
            score_strategy(),
            proptest::option::of("[a-z]{1,10}"),
        )
            .prop_map(|(id, uri, dims, mut scores, caption_raw)| {
                let mut r = ManifestRecord::new(id, uri);
                if let Some((w, h)) = dims {
                    r.width = Some(w);
                    r.height = Some(h);
                } else {
                    // A pixel score without dimensions is invalid by design.
                    scores.luminance = None;
                }
                r.scores = scores;
                r.caption_raw = caption_raw;
                r
            })
    }

    proptest! {
        #[test]
        fn line_roundtrip_preserves_every_field(r in record_strategy()) {
            prop_assert!(r.validate().is_ok());
            let line = serde_json::to_string(&r).unwrap();
            let back: ManifestRecord = serde_json::from_str(&line).unwrap();
            prop_assert_eq!(back, r);
        }

        #[test]
        fn stream_roundtrip_preserves_order(records in proptest::collection::vec(record_strategy(), 0..40)) {
            // Dedup ids to satisfy the uniqueness invariant.
            let mut seen = HashSet::new();
            let records: Vec<ManifestRecord> = records
                .into_iter()
                .enumerate()
                .map(|(i, mut r)| {
                    if !seen.insert(r.id.clone()) {
                        r.id = format!("{}-{i}", r.id);
                        seen.insert(r.id.clone());
                    }
                    r
                })
                .collect();
            let mut buf = Vec::new();
            let n = write_manifest(records.iter(), &mut buf).unwrap();
            prop_assert_eq!(n, records.len());
            let load = read_all(buf.as_slice(), &ReadOptions::default()).unwrap();
            prop_assert_eq!(load.records, records);
        }
    }
}
