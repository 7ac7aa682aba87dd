//! Four-slot structured caption grammar.
//!
//! A structured caption names, in order: the subject, the setting, the image
//! aesthetics, and the camera details. On the wire the four slots are joined
//! into a single line with slot markers in one of two styles — numeric
//! (`1.` … `4.`) or tilde (`~1~` … `~4~`). This module parses and validates
//! that shape, renders it back, applies slot permutations (shuffle /
//! canonicalize), rewrites numeric markers into the tilde form that survives
//! tokenizers which split on digit-dot sequences, and detects generation
//! defects (repetition loops, overlength).
//!
//! Parsing and construction share one whitespace normalization (all runs of
//! whitespace, newlines included, collapse to a single space), which makes
//! `parse(render(c, s)) == (c, s)` an identity on every valid caption.

use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::manifest::ReasonCode;

/// Number of slots in a structured caption.
pub const SLOT_COUNT: usize = 4;

/// Human-readable slot names, in slot order.
pub const SLOT_NAMES: [&str; SLOT_COUNT] = ["subject", "setting", "aesthetics", "camera"];

/// Collapse every run of whitespace (spaces, tabs, newlines) to a single
/// space and trim the ends. Both the parser and [`StructuredCaption::new`]
/// funnel text through here so the two sides agree byte-for-byte.
pub(crate) fn normalize_ws(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ")
}

// ---------------------------------------------------------------------------
// Marker styles and marker scanning
// ---------------------------------------------------------------------------

/// The two marker styles a caption line can use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MarkerStyle {
    /// `1.` `2.` `3.` `4.`
    Numeric,
    /// `~1~` `~2~` `~3~` `~4~` — the rewritten form; `~` maps to a token the
    /// downstream text encoder treats as unknown, so slot boundaries stay
    /// unambiguous after tokenization.
    Tilde,
}

impl MarkerStyle {
    /// The literal marker token for `label` (1–4).
    pub fn marker(self, label: u8) -> &'static str {
        const NUMERIC: [&str; 4] = ["1.", "2.", "3.", "4."];
        const TILDE: [&str; 4] = ["~1~", "~2~", "~3~", "~4~"];
        assert!((1..=4).contains(&label), "marker label out of range: {label}");
        match self {
            MarkerStyle::Numeric => NUMERIC[(label - 1) as usize],
            MarkerStyle::Tilde => TILDE[(label - 1) as usize],
        }
    }
}

impl fmt::Display for MarkerStyle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            MarkerStyle::Numeric => "numeric",
            MarkerStyle::Tilde => "tilde",
        })
    }
}

/// One marker occurrence found in raw text: its label, byte range, and style.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct MarkerHit {
    label: u8,
    start: usize,
    end: usize,
    style: MarkerStyle,
}

/// Scan `text` for standalone marker tokens of either style.
///
/// A token only counts as a marker when it is preceded by start-of-string or
/// whitespace AND followed by whitespace or end-of-string. That boundary rule
/// is what keeps `3.14` (digit-dot followed by a digit) and `x~2~y` inert as
/// plain content.
fn scan_markers(text: &str) -> Vec<MarkerHit> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let n = chars.len();
    let at = |k: usize| chars.get(k).map(|&(_, c)| c);
    let mut hits = Vec::new();
    let mut k = 0;
    while k < n {
        let boundary_before = k == 0 || chars[k - 1].1.is_whitespace();
        if boundary_before {
            let (pos, c) = chars[k];
            // Numeric: digit 1-4, '.', then whitespace or end.
            if ('1'..='4').contains(&c)
                && at(k + 1) == Some('.')
                && at(k + 2).is_none_or(char::is_whitespace)
            {
                // Marker chars are ASCII, so byte arithmetic is safe.
                hits.push(MarkerHit {
                    label: c as u8 - b'0',
                    start: pos,
                    end: pos + 2,
                    style: MarkerStyle::Numeric,
                });
                k += 2;
                continue;
            }
            // Tilde: '~', digit 1-4, '~', then whitespace or end.
            if c == '~' {
                if let Some(d) = at(k + 1) {
                    if ('1'..='4').contains(&d)
                        && at(k + 2) == Some('~')
                        && at(k + 3).is_none_or(char::is_whitespace)
                    {
                        hits.push(MarkerHit {
                            label: d as u8 - b'0',
                            start: pos,
                            end: pos + 3,
                            style: MarkerStyle::Tilde,
                        });
                        k += 3;
                        continue;
                    }
                }
            }
        }
        k += 1;
    }
    hits
}

// ---------------------------------------------------------------------------
// Validation reports
// ---------------------------------------------------------------------------

/// One problem found while validating caption text.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CaptionIssue {
    /// Marker `i` (1–4) never appears.
    MissingMarker(u8),
    /// Markers appear, but not in ascending label order.
    OutOfOrder,
    /// Marker `i` appears more than once (or a second marker-shaped token of
    /// the other style claims the same label).
    DuplicateMarker(u8),
    /// Slot `i` is empty after whitespace normalization.
    EmptySlot(u8),
    /// Non-whitespace content precedes the first marker.
    TrailingGarbage,
    /// Text is dominated by repeated n-grams or verbatim-repeated sentences —
    /// the captioner got stuck in a loop.
    RepetitionLoop,
    /// Text exceeds the configured maximum character count.
    Overlength,
}

impl CaptionIssue {
    /// The coarse manifest reason code this issue maps to when a record is
    /// marked defective.
    pub fn reason_code(&self) -> ReasonCode {
        match self {
            CaptionIssue::RepetitionLoop => ReasonCode::CaptionRepetition,
            CaptionIssue::Overlength => ReasonCode::CaptionOverlength,
            _ => ReasonCode::CaptionMalformed,
        }
    }
}

impl fmt::Display for CaptionIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CaptionIssue::MissingMarker(i) => write!(f, "missing_marker({i})"),
            CaptionIssue::OutOfOrder => write!(f, "out_of_order"),
            CaptionIssue::DuplicateMarker(i) => write!(f, "duplicate_marker({i})"),
            CaptionIssue::EmptySlot(i) => write!(f, "empty_slot({i})"),
            CaptionIssue::TrailingGarbage => write!(f, "trailing_garbage"),
            CaptionIssue::RepetitionLoop => write!(f, "repetition_loop"),
            CaptionIssue::Overlength => write!(f, "overlength"),
        }
    }
}

/// The outcome of validating one caption text. Empty issues ⇔ well-formed.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ValidationReport {
    pub issues: Vec<CaptionIssue>,
}

impl ValidationReport {
    pub fn well_formed(&self) -> bool {
        self.issues.is_empty()
    }

    /// Push an issue unless an identical one is already recorded.
    fn push(&mut self, issue: CaptionIssue) {
        if !self.issues.contains(&issue) {
            self.issues.push(issue);
        }
    }

    /// Manifest reason codes for these issues, deduplicated, in issue order.
    pub fn reason_codes(&self) -> Vec<ReasonCode> {
        let mut out = Vec::new();
        for issue in &self.issues {
            let code = issue.reason_code();
            if !out.contains(&code) {
                out.push(code);
            }
        }
        out
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.issues.is_empty() {
            return f.write_str("well-formed");
        }
        for (i, issue) in self.issues.iter().enumerate() {
            if i > 0 {
                f.write_str(", ")?;
            }
            write!(f, "{issue}")?;
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

/// Errors from caption construction and slot-level operations.
#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum CaptionError {
    #[error("slot {0} is empty after whitespace normalization")]
    EmptySlot(u8),
    #[error("slot {slot} contains a bare marker token for label {label}")]
    MarkerInSlot { slot: u8, label: u8 },
    #[error("permutation {0:?} is not a bijection on 1..=4")]
    InvalidPermutation([u8; 4]),
    #[error("caption does not parse: {0}")]
    Unparseable(ValidationReport),
}

// ---------------------------------------------------------------------------
// StructuredCaption
// ---------------------------------------------------------------------------

/// A validated four-slot caption: subject, setting, aesthetics, camera.
///
/// Construction normalizes whitespace in each slot and enforces the two slot
/// invariants — every slot non-empty, and no slot containing a standalone
/// marker token of either style (a slot like `"worth 3.14"` is fine; a slot
/// like `"see ~2~ here"` is not, because rendering it would create a fifth
/// marker and break the round-trip). Fields are private so every live value
/// satisfies the invariants; [`render`] is therefore infallible.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "SlotsWire", into = "SlotsWire")]
pub struct StructuredCaption {
    subject: String,
    setting: String,
    aesthetics: String,
    camera: String,
}

/// Wire shape of the four slots (the `caption_slots` manifest object).
#[derive(Debug, Clone, Serialize, Deserialize)]
struct SlotsWire {
    subject: String,
    setting: String,
    aesthetics: String,
    camera: String,
}

impl TryFrom<SlotsWire> for StructuredCaption {
    type Error = CaptionError;
    fn try_from(w: SlotsWire) -> Result<Self, CaptionError> {
        StructuredCaption::new(w.subject, w.setting, w.aesthetics, w.camera)
    }
}

impl From<StructuredCaption> for SlotsWire {
    fn from(c: StructuredCaption) -> Self {
        SlotsWire {
            subject: c.subject,
            setting: c.setting,
            aesthetics: c.aesthetics,
            camera: c.camera,
        }
    }
}

impl StructuredCaption {
    /// Build a caption from the four slot texts, normalizing whitespace and
    /// enforcing the slot invariants.
    pub fn new(
        subject: impl Into<String>,
        setting: impl Into<String>,
        aesthetics: impl Into<String>,
        camera: impl Into<String>,
    ) -> Result<Self, CaptionError> {
        let slots = [subject.into(), setting.into(), aesthetics.into(), camera.into()];
        let slots = slots.map(|s| normalize_ws(&s));
        for (i, slot) in slots.iter().enumerate() {
            let slot_no = (i + 1) as u8;
            if slot.is_empty() {
                return Err(CaptionError::EmptySlot(slot_no));
            }
            if let Some(hit) = scan_markers(slot).first() {
                return Err(CaptionError::MarkerInSlot { slot: slot_no, label: hit.label });
            }
        }
        let [subject, setting, aesthetics, camera] = slots;
        Ok(StructuredCaption { subject, setting, aesthetics, camera })
    }

    /// Build from a slot array in slot order.
    pub fn from_slots(slots: [String; SLOT_COUNT]) -> Result<Self, CaptionError> {
        let [a, b, c, d] = slots;
        Self::new(a, b, c, d)
    }

    pub fn subject(&self) -> &str {
        &self.subject
    }

    pub fn setting(&self) -> &str {
        &self.setting
    }

    pub fn aesthetics(&self) -> &str {
        &self.aesthetics
    }

    pub fn camera(&self) -> &str {
        &self.camera
    }

    /// The four slots in slot order.
    pub fn slots(&self) -> [&str; SLOT_COUNT] {
        [&self.subject, &self.setting, &self.aesthetics, &self.camera]
    }

    /// Consume the caption, yielding owned slot strings in slot order.
    pub fn into_slots(self) -> [String; SLOT_COUNT] {
        [self.subject, self.setting, self.aesthetics, self.camera]
    }
}

// ---------------------------------------------------------------------------
// Parse and render
// ---------------------------------------------------------------------------

/// Parse one caption line into its four slots plus the marker style found.
///
/// The style is fixed by the first marker encountered; every standalone
/// marker token of either style is then accounted for. Marker-shaped tokens
/// of the *other* style are reported as duplicate labels — mixed-style
/// captions are rejected, never repaired. On success the segment after
/// marker `i` (up to marker `i+1` or end of text) becomes slot `i`, with
/// newlines and runs of whitespace collapsed.
pub fn parse_caption(text: &str) -> Result<(StructuredCaption, MarkerStyle), ValidationReport> {
    let hits = scan_markers(text);
    let mut report = ValidationReport::default();

    let Some(first) = hits.first() else {
        for label in 1..=SLOT_COUNT as u8 {
            report.push(CaptionIssue::MissingMarker(label));
        }
        return Err(report);
    };
    let style = first.style;
    let style_hits: Vec<&MarkerHit> = hits.iter().filter(|h| h.style == style).collect();

    let mut counts = [0usize; SLOT_COUNT];
    for h in &style_hits {
        counts[(h.label - 1) as usize] += 1;
    }
    for label in 1..=SLOT_COUNT as u8 {
        if counts[(label - 1) as usize] == 0 {
            report.push(CaptionIssue::MissingMarker(label));
        }
    }
    for label in 1..=SLOT_COUNT as u8 {
        if counts[(label - 1) as usize] > 1 {
            report.push(CaptionIssue::DuplicateMarker(label));
        }
    }
    if style_hits.windows(2).any(|w| w[1].label < w[0].label) {
        report.push(CaptionIssue::OutOfOrder);
    }
    if !text[..first.start].trim().is_empty() {
        report.push(CaptionIssue::TrailingGarbage);
    }
    // A marker-shaped token of the other style claims a label that the
    // dominant style also owns (or should own): report it as a duplicate.
    for h in hits.iter().filter(|h| h.style != style) {
        report.push(CaptionIssue::DuplicateMarker(h.label));
    }
    if !report.issues.is_empty() {
        return Err(report);
    }

    // Exactly four markers of one style, labels 1..4 in order, no cross-style
    // tokens anywhere. Slice out the segments.
    let mut slots: Vec<String> = Vec::with_capacity(SLOT_COUNT);
    for (i, h) in style_hits.iter().enumerate() {
        let seg_end = style_hits.get(i + 1).map_or(text.len(), |next| next.start);
        let slot = normalize_ws(&text[h.end..seg_end]);
        if slot.is_empty() {
            report.push(CaptionIssue::EmptySlot(h.label));
        }
        slots.push(slot);
    }
    if !report.issues.is_empty() {
        return Err(report);
    }

    let slots: [String; SLOT_COUNT] = slots.try_into().expect("exactly four validated segments");
    let caption = StructuredCaption::from_slots(slots)
        .expect("segments cannot be empty or contain standalone markers once validation passes");
    Ok((caption, style))
}

/// Render a caption as one line: `m1 slot1 m2 slot2 m3 slot3 m4 slot4`, one
/// space after each marker. Inverse of [`parse_caption`] for every valid
/// caption and both styles.
pub fn render(caption: &StructuredCaption, style: MarkerStyle) -> String {
    let s = caption.slots();
    format!(
        "{} {} {} {} {} {} {} {}",
        style.marker(1),
        s[0],
        style.marker(2),
        s[1],
        style.marker(3),
        s[2],
        style.marker(4),
        s[3],
    )
}

// ---------------------------------------------------------------------------
// Permutations and the shuffle group action
// ---------------------------------------------------------------------------

/// A permutation of the four slots.
///
/// `mapping[i]` is the (1-based) source slot rendered at output position
/// `i`: applying `(3,1,4,2)` to slots `(a,b,c,d)` yields `(c,a,d,b)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "[u8; 4]", into = "[u8; 4]")]
pub struct Permutation4 {
    mapping: [u8; SLOT_COUNT],
}

/// All 24 permutations in lexicographic order of their mapping arrays.
const ALL_PERMUTATIONS: [[u8; 4]; 24] = [
    [1, 2, 3, 4], [1, 2, 4, 3], [1, 3, 2, 4], [1, 3, 4, 2], [1, 4, 2, 3], [1, 4, 3, 2],
    [2, 1, 3, 4], [2, 1, 4, 3], [2, 3, 1, 4], [2, 3, 4, 1], [2, 4, 1, 3], [2, 4, 3, 1],
    [3, 1, 2, 4], [3, 1, 4, 2], [3, 2, 1, 4], [3, 2, 4, 1], [3, 4, 1, 2], [3, 4, 2, 1],
    [4, 1, 2, 3], [4, 1, 3, 2], [4, 2, 1, 3], [4, 2, 3, 1], [4, 3, 1, 2], [4, 3, 2, 1],
];

impl TryFrom<[u8; 4]> for Permutation4 {
    type Error = CaptionError;
    fn try_from(mapping: [u8; 4]) -> Result<Self, CaptionError> {
        Permutation4::new(mapping)
    }
}

impl From<Permutation4> for [u8; 4] {
    fn from(p: Permutation4) -> [u8; 4] {
        p.mapping
    }
}

impl Permutation4 {
    /// Validate that `mapping` is a bijection on {1,2,3,4}.
    pub fn new(mapping: [u8; 4]) -> Result<Self, CaptionError> {
        let mut seen = [false; SLOT_COUNT];
        for &v in &mapping {
            if !(1..=SLOT_COUNT as u8).contains(&v) || seen[(v - 1) as usize] {
                return Err(CaptionError::InvalidPermutation(mapping));
            }
            seen[(v - 1) as usize] = true;
        }
        Ok(Permutation4 { mapping })
    }

    pub const fn identity() -> Self {
        Permutation4 { mapping: [1, 2, 3, 4] }
    }

    pub fn mapping(&self) -> [u8; 4] {
        self.mapping
    }

    /// The inverse permutation: `p.apply(p.inverse().apply(x)) == x`.
    pub fn inverse(&self) -> Self {
        let mut inv = [0u8; SLOT_COUNT];
        for (i, &v) in self.mapping.iter().enumerate() {
            inv[(v - 1) as usize] = (i + 1) as u8;
        }
        Permutation4 { mapping: inv }
    }

    /// Reorder `slots` so output position `i` holds `slots[mapping[i]-1]`.
    pub fn apply<T: Clone>(&self, slots: &[T; SLOT_COUNT]) -> [T; SLOT_COUNT] {
        [
            slots[(self.mapping[0] - 1) as usize].clone(),
            slots[(self.mapping[1] - 1) as usize].clone(),
            slots[(self.mapping[2] - 1) as usize].clone(),
            slots[(self.mapping[3] - 1) as usize].clone(),
        ]
    }

    /// Every permutation, in a fixed (lexicographic) order.
    pub fn all() -> [Permutation4; 24] {
        ALL_PERMUTATIONS.map(|mapping| Permutation4 { mapping })
    }
}

impl fmt::Display for Permutation4 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let [a, b, c, d] = self.mapping;
        write!(f, "({a},{b},{c},{d})")
    }
}

/// Render `caption` with its slots reordered by `g`.
///
/// Markers in the output are renumbered sequentially 1..4, so the result
/// *looks* canonical while the content order is permuted — slot identity is
/// recoverable only via the recorded `g`, which is why the manifest persists
/// the permutation alongside the shuffled text.
pub fn shuffle(caption: &StructuredCaption, g: Permutation4, style: MarkerStyle) -> String {
    let slots = caption.slots();
    let shuffled = g.apply(&slots);
    format!(
        "{} {} {} {} {} {} {} {}",
        style.marker(1),
        shuffled[0],
        style.marker(2),
        shuffled[1],
        style.marker(3),
        shuffled[2],
        style.marker(4),
        shuffled[3],
    )
}

/// Invert a recorded shuffle: parse the shuffled text and route each segment
/// back to its original slot, so `canonicalize(shuffle(c, g), g) == c`.
pub fn canonicalize(shuffled_text: &str, g: Permutation4) -> Result<StructuredCaption, CaptionError> {
    let (as_rendered, _style) = parse_caption(shuffled_text).map_err(CaptionError::Unparseable)?;
    let segments = as_rendered.into_slots();
    let mut original: [Option<String>; SLOT_COUNT] = Default::default();
    for (i, segment) in segments.into_iter().enumerate() {
        original[(g.mapping[i] - 1) as usize] = Some(segment);
    }
    let slots = original.map(|s| s.expect("bijective mapping fills every slot"));
    StructuredCaption::from_slots(slots)
}

/// Deterministic per-record permutation: a pure function of `(seed, id)`.
///
/// The pair is hashed with SHA-256 (stable across platforms and releases,
/// unlike the std hasher) and the first eight digest bytes select one of the
/// 24 permutations. The 2⁶⁴ → 24 reduction has modulo bias below 2⁻⁵⁹ —
/// unmeasurable at any corpus size. No shared generator state, so parallel
/// workers can derive permutations in any order.
pub fn random_permutation(seed: u64, id: &str) -> Permutation4 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(id.as_bytes());
    let digest = hasher.finalize();
    let x = u64::from_le_bytes(digest[..8].try_into().expect("digest has at least 8 bytes"));
    Permutation4 { mapping: ALL_PERMUTATIONS[(x % 24) as usize] }
}

// ---------------------------------------------------------------------------
// Marker rewriting
// ---------------------------------------------------------------------------

/// Rewrite a caption's slot markers into the tilde style.
///
/// Operates on the parse tree, not on raw substrings: the text is parsed
/// first (newlines collapse to spaces at this step), then re-rendered with
/// `~1~` … `~4~` markers. Numerals inside slot content such as `3.14` are
/// untouched because they never parse as markers. Idempotent — tilde-style
/// input re-renders identically.
pub fn rewrite_markers(text: &str) -> Result<String, ValidationReport> {
    let (caption, _style) = parse_caption(text)?;
    Ok(render(&caption, MarkerStyle::Tilde))
}

// ---------------------------------------------------------------------------
// Defect detection
// ---------------------------------------------------------------------------

/// Thresholds for caption defect detection. Captioning models wedge into
/// repetition loops or run past any sensible length; the cutoffs below are
/// operational choices, so they are exposed in configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DefectConfig {
    /// n-gram size for repetition mass (tokens).
    pub ngram: usize,
    /// Flag when the fraction of n-gram instances whose gram occurs at least
    /// twice exceeds this ratio (strictly).
    pub repeat_ratio: f64,
    /// Flag when any whitespace-normalized sentence repeats verbatim at
    /// least this many times.
    pub sentence_repeats: usize,
    /// Flag when the text exceeds this many characters.
    pub max_chars: usize,
}

impl Default for DefectConfig {
    fn default() -> Self {
        DefectConfig { ngram: 4, repeat_ratio: 0.5, sentence_repeats: 3, max_chars: 2000 }
    }
}

impl DefectConfig {
    /// Configuration violations, empty when the config is usable.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.ngram == 0 {
            out.push("defects.ngram must be at least 1".into());
        }
        if !self.repeat_ratio.is_finite() || !(0.0..=1.0).contains(&self.repeat_ratio) {
            out.push(format!("defects.repeat_ratio must lie in [0, 1], got {}", self.repeat_ratio));
        }
        if self.sentence_repeats < 2 {
            out.push("defects.sentence_repeats must be at least 2".into());
        }
        if self.max_chars == 0 {
            out.push("defects.max_chars must be at least 1".into());
        }
        out
    }
}

/// Fraction of n-gram instances whose gram occurs at least twice in `text`.
/// `"a b a b a b"` with n=2 → grams (a b), (b a), (a b), (b a), (a b): every
/// instance repeated → mass 1.0.
fn repeated_ngram_mass(text: &str, n: usize) -> f64 {
    let tokens: Vec<&str> = text.split_whitespace().collect();
    if n == 0 || tokens.len() < n {
        return 0.0;
    }
    let mut counts: HashMap<&[&str], u32> = HashMap::new();
    for window in tokens.windows(n) {
        *counts.entry(window).or_insert(0) += 1;
    }
    let total = (tokens.len() - n + 1) as f64;
    let repeated: u32 = counts.values().filter(|&&c| c >= 2).sum();
    f64::from(repeated) / total
}

/// Highest multiplicity of any whitespace-normalized sentence in `text`.
/// Sentences split on `.`, `!`, `?`; comparison is verbatim (case-sensitive).
fn max_sentence_multiplicity(text: &str) -> usize {
    let mut counts: HashMap<String, usize> = HashMap::new();
    let mut max = 0;
    for raw in text.split(['.', '!', '?']) {
        let sentence = normalize_ws(raw);
        if sentence.is_empty() {
            continue;
        }
        let c = counts.entry(sentence).or_insert(0);
        *c += 1;
        max = max.max(*c);
    }
    max
}

/// Inspect caption text for defects: template violations (via
/// [`parse_caption`]), repetition loops, and overlength. Report-only — never
/// errors, and a well-formed caption yields an empty report.
pub fn detect_defect(text: &str, cfg: &DefectConfig) -> ValidationReport {
    let mut report = match parse_caption(text) {
        Ok(_) => ValidationReport::default(),
        Err(report) => report,
    };
    if repeated_ngram_mass(text, cfg.ngram) > cfg.repeat_ratio
        || (cfg.sentence_repeats > 0 && max_sentence_multiplicity(text) >= cfg.sentence_repeats)
    {
        report.push(CaptionIssue::RepetitionLoop);
    }
    if text.chars().count() > cfg.max_chars {
        report.push(CaptionIssue::Overlength);
    }
    report
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
