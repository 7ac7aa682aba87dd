//! Pixel and text scoring plus the combined keep/reject predicate.
//!
//! Three scalar scores gate each image:
//!
//! * **luminance** — mean weighted brightness over all pixels, range
//!   [0, 255]; images outside an inclusive band are rejected as
//!   near-black/near-white,
//! * **OCR score** — the confidence-weighted fraction of a fixed detector
//!   frame covered by detected text polygons; a band in the middle
//!   ("scribbles": enough text to distract, too little to read) is rejected,
//!   while near-zero and text-dominant images are kept,
//! * **aesthetic** — a scalar preference estimate fetched from an external
//!   scorer (sidecar file or remote client); a strict lower bound applies.
//!
//! All scoring functions are pure and reentrant; the aesthetic client
//! wrapper adds caching with in-flight deduplication.

use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, Read};
use std::path::Path;
use std::sync::{Arc, Mutex};

use serde::{Deserialize, Serialize};

use crate::client::{ClientError, RetryPolicy};
use crate::manifest::{FilterOutcome, ReasonCode, ScoreSet};

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, thiserror::Error)]
pub enum ScoreError {
    #[error("cannot score an empty pixel stream")]
    EmptyPixels,
    #[error("invalid luminance weights: {0}")]
    BadWeights(String),
    #[error("polygon has {0} vertices; at least 3 required")]
    DegeneratePolygon(usize),
    #[error("polygon confidence {0} outside [0, 1]")]
    BadConfidence(f64),
    #[error("polygon has a non-finite coordinate")]
    BadVertex,
    #[error("missing {0} score")]
    MissingScore(&'static str),
    #[error("{0} score is not finite")]
    NotFinite(&'static str),
    #[error("sidecar {path}: {message}")]
    Sidecar { path: String, message: String },
    #[error("client: {0}")]
    Client(#[from] ClientError),
}

// ---------------------------------------------------------------------------
// Luminance
// ---------------------------------------------------------------------------

/// Per-channel weights for the brightness average. The default is the
/// Rec. 709 triple (0.2126, 0.7152, 0.0722), which sums to exactly 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LuminanceWeights {
    pub r: f64,
    pub g: f64,
    pub b: f64,
}

impl LuminanceWeights {
    pub const REC709: LuminanceWeights = LuminanceWeights { r: 0.2126, g: 0.7152, b: 0.0722 };

    /// Weights must be non-negative and sum to 1 within 1e-12, so the score
    /// of any 8-bit image stays inside [0, 255].
    pub fn validate(&self) -> Result<(), ScoreError> {
        for (name, v) in [("r", self.r), ("g", self.g), ("b", self.b)] {
            if !v.is_finite() || v < 0.0 {
                return Err(ScoreError::BadWeights(format!("{name} = {v}")));
            }
        }
        let sum = self.r + self.g + self.b;
        if (sum - 1.0).abs() > 1e-12 {
            return Err(ScoreError::BadWeights(format!("weights sum to {sum}, expected 1")));
        }
        Ok(())
    }
}

impl Default for LuminanceWeights {
    fn default() -> Self {
        Self::REC709
    }
}

/// The default Rec. 709 weights as exact decimal rationals over 10⁴. Summing
/// integer-weighted channel totals and dividing once at the end makes the
/// score the *exactly rounded* value of the defining formula — no
/// per-pixel rounding, no accumulation drift, and trivial invariance under
/// pixel permutation. In particular a uniform white image scores 255.0 and a
/// uniform black image 0.0, bit-exactly.
const REC709_NUMERATORS: (u64, u64, u64) = (2126, 7152, 722);
const REC709_DENOMINATOR: u64 = 10_000;

/// Mean Rec.-709-weighted brightness of 8-bit RGB pixels, in [0, 255].
///
/// Exact up to one final rounding for images below roughly 3.5 × 10⁹ pixels
/// (the integer-weighted total stays under 2⁵³); beyond that the conversion
/// rounds once more, which is still far inside any stated tolerance.
pub fn luminance_score<I>(pixels: I) -> Result<f64, ScoreError>
where
    I: IntoIterator<Item = [u8; 3]>,
{
    let (mut sr, mut sg, mut sb, mut n) = (0u64, 0u64, 0u64, 0u64);
    for [r, g, b] in pixels {
        sr += u64::from(r);
        sg += u64::from(g);
        sb += u64::from(b);
        n += 1;
    }
    if n == 0 {
        return Err(ScoreError::EmptyPixels);
    }
    let (wr, wg, wb) = REC709_NUMERATORS;
    let weighted = wr * sr + wg * sg + wb * sb;
    Ok(weighted as f64 / (REC709_DENOMINATOR * n) as f64)
}

/// [`luminance_score`] with caller-supplied weights.
///
/// Channel totals are still accumulated exactly as integers (one weighted
/// combination at the end), so the result is independent of pixel order for
/// arbitrary weights too.
pub fn luminance_score_weighted<I>(pixels: I, weights: &LuminanceWeights) -> Result<f64, ScoreError>
where
    I: IntoIterator<Item = [u8; 3]>,
{
    weights.validate()?;
    let (mut sr, mut sg, mut sb, mut n) = (0u64, 0u64, 0u64, 0u64);
    for [r, g, b] in pixels {
        sr += u64::from(r);
        sg += u64::from(g);
        sb += u64::from(b);
        n += 1;
    }
    if n == 0 {
        return Err(ScoreError::EmptyPixels);
    }
    let total = weights.r * sr as f64 + weights.g * sg as f64 + weights.b * sb as f64;
    Ok(total / n as f64)
}

// ---------------------------------------------------------------------------
// Polygon area and OCR score
// ---------------------------------------------------------------------------

/// One detected text region: a polygon in detector-frame coordinates plus
/// the detector's confidence.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolygonWire", into = "PolygonWire")]
pub struct TextPolygon {
    vertices: Vec<(f64, f64)>,
    confidence: f64,
}

/// Wire shape of a detector polygon.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct PolygonWire {
    points: Vec<[f64; 2]>,
    confidence: f64,
}

impl TryFrom<PolygonWire> for TextPolygon {
    type Error = String;
    fn try_from(w: PolygonWire) -> Result<Self, String> {
        TextPolygon::new(w.points.into_iter().map(|[x, y]| (x, y)).collect(), w.confidence)
            .map_err(|e| e.to_string())
    }
}

impl From<TextPolygon> for PolygonWire {
    fn from(p: TextPolygon) -> Self {
        PolygonWire {
            points: p.vertices.into_iter().map(|(x, y)| [x, y]).collect(),
            confidence: p.confidence,
        }
    }
}

impl TextPolygon {
    /// Confidence must lie in [0, 1] and coordinates must be finite. Vertex
    /// count is *not* checked here — detectors do emit degenerate shapes, and
    /// whether those are an error is the scorer's call (see
    /// [`DegeneratePolicy`]).
    pub fn new(vertices: Vec<(f64, f64)>, confidence: f64) -> Result<Self, ScoreError> {
        if !confidence.is_finite() || !(0.0..=1.0).contains(&confidence) {
            return Err(ScoreError::BadConfidence(confidence));
        }
        if vertices.iter().any(|&(x, y)| !x.is_finite() || !y.is_finite()) {
            return Err(ScoreError::BadVertex);
        }
        Ok(TextPolygon { vertices, confidence })
    }

    pub fn vertices(&self) -> &[(f64, f64)] {
        &self.vertices
    }

    pub fn confidence(&self) -> f64 {
        self.confidence
    }
}

/// Absolute shoelace area of the closed polygon through `vertices`, in
/// squared coordinate units. Orientation-independent; collinear input gives
/// 0. Integer-valued coordinates small enough to multiply exactly (anything
/// in a detector frame) produce exact areas.
pub fn polygon_area(vertices: &[(f64, f64)]) -> Result<f64, ScoreError> {
    if vertices.len() < 3 {
        return Err(ScoreError::DegeneratePolygon(vertices.len()));
    }
    let mut acc = 0.0;
    for (i, &(xi, yi)) in vertices.iter().enumerate() {
        let (xj, yj) = vertices[(i + 1) % vertices.len()];
        acc += xi * yj - xj * yi;
    }
    Ok(acc.abs() / 2.0)
}

/// What to do with a polygon that has fewer than three vertices.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DegeneratePolicy {
    /// Treat it as a data error (default).
    #[default]
    Error,
    /// Skip it; it contributes nothing to the score.
    Skip,
}

// ---------------------------------------------------------------------------
// Filter configuration and the keep predicate
// ---------------------------------------------------------------------------

/// Thresholds for the combined keep/reject predicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterConfig {
    /// Keep strictly above this aesthetic score.
    pub aesthetic_min: f64,
    /// Keep luminance inside [low, high], both ends inclusive.
    pub luminance_low: f64,
    pub luminance_high: f64,
    /// Keep OCR scores strictly below this…
    pub ocr_low_cut: f64,
    /// …or at/above this. The band in between is rejected.
    pub ocr_high_cut: f64,
    /// Side length S of the square detector frame; OCR scores divide by S².
    pub detector_side: u32,
    /// Polygons below this confidence contribute nothing.
    pub confidence_min: f64,
}

impl Default for FilterConfig {
    fn default() -> Self {
        FilterConfig {
            aesthetic_min: 4.73,
            luminance_low: 12.75,
            luminance_high: 204.0,
            ocr_low_cut: 0.1,
            ocr_high_cut: 0.6,
            detector_side: 736,
            confidence_min: 0.7,
        }
    }
}

impl FilterConfig {
    /// Configuration violations, each naming the offending field.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if !self.aesthetic_min.is_finite() {
            out.push(format!("filter.aesthetic_min must be finite, got {}", self.aesthetic_min));
        }
        if !self.luminance_low.is_finite()
            || !self.luminance_high.is_finite()
            || self.luminance_low >= self.luminance_high
        {
            out.push(format!(
                "filter.luminance_low ({}) must be below filter.luminance_high ({})",
                self.luminance_low, self.luminance_high
            ));
        }
        if !self.ocr_low_cut.is_finite() || !self.ocr_high_cut.is_finite() {
            out.push("filter.ocr_low_cut and filter.ocr_high_cut must be finite".into());
        } else if self.ocr_low_cut < 0.0 || self.ocr_low_cut > self.ocr_high_cut {
            out.push(format!(
                "filter.ocr_low_cut ({}) must satisfy 0 <= low <= filter.ocr_high_cut ({})",
                self.ocr_low_cut, self.ocr_high_cut
            ));
        }
        if self.detector_side == 0 {
            out.push("filter.detector_side must be at least 1".into());
        }
        if !self.confidence_min.is_finite() || !(0.0..=1.0).contains(&self.confidence_min) {
            out.push(format!(
                "filter.confidence_min must lie in [0, 1], got {}",
                self.confidence_min
            ));
        }
        out
    }
}

/// Confidence-weighted text coverage: Σ area(p)·confidence(p) over polygons
/// at or above the confidence cutoff, divided by the detector frame area S².
///
/// Overlapping polygons double-count — the score is the plain sum the
/// formula states, may exceed 1, and is never clamped. Summation follows
/// input order; the single division happens at the end.
pub fn ocr_score(polygons: &[TextPolygon], cfg: &FilterConfig) -> Result<f64, ScoreError> {
    ocr_score_with(polygons, cfg, DegeneratePolicy::Error)
}

/// [`ocr_score`] with an explicit policy for degenerate (< 3 vertex)
/// polygons.
pub fn ocr_score_with(
    polygons: &[TextPolygon],
    cfg: &FilterConfig,
    policy: DegeneratePolicy,
) -> Result<f64, ScoreError> {
    let mut weighted = 0.0f64;
    for polygon in polygons {
        if polygon.vertices.len() < 3 {
            match policy {
                DegeneratePolicy::Error => {
                    return Err(ScoreError::DegeneratePolygon(polygon.vertices.len()));
                }
                DegeneratePolicy::Skip => continue,
            }
        }
        if polygon.confidence < cfg.confidence_min {
            continue;
        }
        weighted += polygon_area(&polygon.vertices)? * polygon.confidence;
    }
    let frame = (u64::from(cfg.detector_side) * u64::from(cfg.detector_side)) as f64;
    Ok(weighted / frame)
}

/// The combined keep/reject predicate over a complete [`ScoreSet`]:
/// accepted iff aesthetic > min AND luminance within the inclusive band AND
/// OCR outside the discard band. Rejections list *every* violated rule.
pub fn keep_decision(scores: &ScoreSet, cfg: &FilterConfig) -> Result<FilterOutcome, ScoreError> {
    let aesthetic = scores.aesthetic.ok_or(ScoreError::MissingScore("aesthetic"))?;
    let luminance = scores.luminance.ok_or(ScoreError::MissingScore("luminance"))?;
    let ocr = scores.ocr.ok_or(ScoreError::MissingScore("ocr"))?;
    for (name, v) in [("aesthetic", aesthetic), ("luminance", luminance), ("ocr", ocr)] {
        if !v.is_finite() {
            return Err(match name {
                "aesthetic" => ScoreError::NotFinite("aesthetic"),
                "luminance" => ScoreError::NotFinite("luminance"),
                _ => ScoreError::NotFinite("ocr"),
            });
        }
    }

    let mut reasons = Vec::new();
    if aesthetic <= cfg.aesthetic_min {
        reasons.push(ReasonCode::Aesthetic);
    }
    if luminance < cfg.luminance_low {
        reasons.push(ReasonCode::LuminanceLow);
    } else if luminance > cfg.luminance_high {
        reasons.push(ReasonCode::LuminanceHigh);
    }
    if ocr >= cfg.ocr_low_cut && ocr < cfg.ocr_high_cut {
        reasons.push(ReasonCode::OcrIntermediate);
    }
    if reasons.is_empty() {
        Ok(FilterOutcome::accepted())
    } else {
        Ok(FilterOutcome::rejected(reasons))
    }
}

// ---------------------------------------------------------------------------
// Aesthetic score clients and sidecars
// ---------------------------------------------------------------------------

/// A source of aesthetic scores. Implementations: a preloaded sidecar file,
/// a constant stub, or (in the CLI) a remote HTTP scorer.
pub trait AestheticClient: Send + Sync {
    fn fetch(&self, id: &str, uri: &str) -> Result<f64, ClientError>;
}

impl<T: AestheticClient + ?Sized> AestheticClient for std::sync::Arc<T> {
    fn fetch(&self, id: &str, uri: &str) -> Result<f64, ClientError> {
        (**self).fetch(id, uri)
    }
}

/// Stub client returning one constant — handy for tests and dry runs.
#[derive(Debug, Clone, Copy)]
pub struct ConstantAesthetic(pub f64);

impl AestheticClient for ConstantAesthetic {
    fn fetch(&self, _id: &str, _uri: &str) -> Result<f64, ClientError> {
        Ok(self.0)
    }
}

/// Aesthetic scores preloaded from a sidecar file: one JSON object per line,
/// `{"id": …, "aesthetic": …}`.
#[derive(Debug, Default)]
pub struct SidecarAesthetics {
    map: HashMap<String, f64>,
}

#[derive(Deserialize)]
struct AestheticLine {
    id: String,
    aesthetic: f64,
}

impl SidecarAesthetics {
    pub fn from_reader<R: Read>(source: R, origin: &str) -> Result<Self, ScoreError> {
        let mut map = HashMap::new();
        for (idx, line) in BufReader::new(source).lines().enumerate() {
            let line = line.map_err(|e| ScoreError::Sidecar {
                path: origin.into(),
                message: format!("line {}: i/o: {e}", idx + 1),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: AestheticLine =
                serde_json::from_str(&line).map_err(|e| ScoreError::Sidecar {
                    path: origin.into(),
                    message: format!("line {}: {e}", idx + 1),
                })?;
            if !entry.aesthetic.is_finite() {
                return Err(ScoreError::Sidecar {
                    path: origin.into(),
                    message: format!("line {}: non-finite score for id {:?}", idx + 1, entry.id),
                });
            }
            if map.insert(entry.id.clone(), entry.aesthetic).is_some() {
                return Err(ScoreError::Sidecar {
                    path: origin.into(),
                    message: format!("duplicate id {:?}", entry.id),
                });
            }
        }
        Ok(SidecarAesthetics { map })
    }

    pub fn load(path: &Path) -> Result<Self, ScoreError> {
        let file = File::open(path).map_err(|e| ScoreError::Sidecar {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_reader(file, &path.display().to_string())
    }

    pub fn get(&self, id: &str) -> Option<f64> {
        self.map.get(id).copied()
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

impl AestheticClient for SidecarAesthetics {
    fn fetch(&self, id: &str, _uri: &str) -> Result<f64, ClientError> {
        self.get(id)
            .ok_or_else(|| ClientError::Protocol(format!("no sidecar aesthetic score for id {id:?}")))
    }
}

/// Caching, retrying wrapper around any [`AestheticClient`].
///
/// Scores are cached by record id. Concurrent fetches of the *same* id are
/// deduplicated: the first caller holds that id's slot while the backend
/// call runs, later callers block on the slot and read the cached value.
/// Distinct ids never contend beyond the brief map lookup.
pub struct CachedAesthetic<C> {
    inner: C,
    retry: RetryPolicy,
    slots: Mutex<HashMap<String, Arc<Mutex<Option<f64>>>>>,
}

impl<C: AestheticClient> CachedAesthetic<C> {
    pub fn new(inner: C, retry: RetryPolicy) -> Self {
        CachedAesthetic { inner, retry, slots: Mutex::new(HashMap::new()) }
    }

    /// Fetch the score for `id`, consulting the cache first and applying the
    /// retry policy to backend calls. Errors are not cached; a later call
    /// retries the backend.
    pub fn fetch(&self, id: &str, uri: &str) -> Result<f64, ClientError> {
        let slot = {
            let mut slots = self.slots.lock().expect("cache map poisoned");
            Arc::clone(slots.entry(id.to_string()).or_default())
        };
        let mut value = slot.lock().expect("cache slot poisoned");
        if let Some(v) = *value {
            return Ok(v);
        }
        let fetched = self.retry.run(|| self.inner.fetch(id, uri))?;
        *value = Some(fetched);
        Ok(fetched)
    }
}

impl<C: AestheticClient> AestheticClient for CachedAesthetic<C> {
    fn fetch(&self, id: &str, uri: &str) -> Result<f64, ClientError> {
        CachedAesthetic::fetch(self, id, uri)
    }
}

// ---------------------------------------------------------------------------
// Detector sidecars
// ---------------------------------------------------------------------------

/// Text-detector output preloaded from a sidecar file: one JSON object per
/// line, `{"id": …, "polygons": [{"points": [[x, y], …], "confidence": …}]}`.
/// Records without an entry simply have no detections.
#[derive(Debug, Default)]
pub struct DetectorSidecar {
    map: HashMap<String, Vec<TextPolygon>>,
}

#[derive(Deserialize)]
struct DetectorLine {
    id: String,
    polygons: Vec<TextPolygon>,
}

impl DetectorSidecar {
    pub fn from_reader<R: Read>(source: R, origin: &str) -> Result<Self, ScoreError> {
        let mut map = HashMap::new();
        for (idx, line) in BufReader::new(source).lines().enumerate() {
            let line = line.map_err(|e| ScoreError::Sidecar {
                path: origin.into(),
                message: format!("line {}: i/o: {e}", idx + 1),
            })?;
            if line.trim().is_empty() {
                continue;
            }
            let entry: DetectorLine =
                serde_json::from_str(&line).map_err(|e| ScoreError::Sidecar {
                    path: origin.into(),
                    message: format!("line {}: {e}", idx + 1),
                })?;
            if map.insert(entry.id.clone(), entry.polygons).is_some() {
                return Err(ScoreError::Sidecar {
                    path: origin.into(),
                    message: format!("duplicate id {:?}", entry.id),
                });
            }
        }
        Ok(DetectorSidecar { map })
    }

    pub fn load(path: &Path) -> Result<Self, ScoreError> {
        let file = File::open(path).map_err(|e| ScoreError::Sidecar {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::from_reader(file, &path.display().to_string())
    }

    /// Detections for `id`; an absent entry means no text was found.
    pub fn polygons(&self, id: &str) -> &[TextPolygon] {
        self.map.get(id).map_or(&[], Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
