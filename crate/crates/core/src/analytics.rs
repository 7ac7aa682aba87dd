//! Logbook analytics: equal-width bucket histograms with mergeable
//! per-bucket statistics, stage-count funnels, and word-frequency tables.
//!
//! Histogram cells are mergeable values — workers aggregate shard-local
//! accumulators and a single reducer folds them, no locks needed during
//! accumulation. Mean and variance come from shifted moments (each cell
//! offsets by its first value) to limit cancellation error.

use std::borrow::Borrow;
use std::collections::{BTreeMap, HashSet};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, thiserror::Error)]
pub enum AnalyticsError {
    #[error("cannot bucket non-finite value {0}")]
    NonFinite(f64),
    #[error("invalid bucket spec: {0}")]
    BadSpec(String),
    #[error("cannot merge histograms with different bucket specs")]
    SpecMismatch,
    #[error("value {value} outside bucket range [{low}, {high}]")]
    OutOfRange { value: f64, low: f64, high: f64 },
    #[error("cannot derive a bucket range from an empty or non-finite stream")]
    EmptyData,
    #[error("stage {stage:?} output {output} exceeds input {input}")]
    StageGrowth { stage: String, input: u64, output: u64 },
    #[error("stage {stage:?} input {input} does not match previous stage output {previous}")]
    StageChain { stage: String, input: u64, previous: u64 },
}

// ---------------------------------------------------------------------------
// Bucket spec
// ---------------------------------------------------------------------------

/// An equal-width histogram layout over [low, high] with `k` buckets.
/// Buckets are left-inclusive; the last bucket also includes `high`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "BucketSpecWire", into = "BucketSpecWire")]
pub struct BucketSpec {
    low: f64,
    high: f64,
    k: u32,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct BucketSpecWire {
    low: f64,
    high: f64,
    k: u32,
}

impl TryFrom<BucketSpecWire> for BucketSpec {
    type Error = String;
    fn try_from(w: BucketSpecWire) -> Result<Self, String> {
        BucketSpec::new(w.low, w.high, w.k).map_err(|e| e.to_string())
    }
}

impl From<BucketSpec> for BucketSpecWire {
    fn from(s: BucketSpec) -> Self {
        BucketSpecWire { low: s.low, high: s.high, k: s.k }
    }
}

/// Where a value falls relative to a [`BucketSpec`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BucketSlot {
    /// Strictly below `low`.
    Below,
    /// Inside the range; bucket indices are 1-based, 1..=k.
    In(u32),
    /// Strictly above `high`.
    Above,
}

impl BucketSpec {
    pub fn new(low: f64, high: f64, k: u32) -> Result<Self, AnalyticsError> {
        if !low.is_finite() || !high.is_finite() || !(low < high) {
            return Err(AnalyticsError::BadSpec(format!(
                "range [{low}, {high}] must be finite with low < high"
            )));
        }
        if k == 0 {
            return Err(AnalyticsError::BadSpec("bucket count must be at least 1".into()));
        }
        Ok(BucketSpec { low, high, k })
    }

    /// Smallest spec covering every finite value in `values`. A stream whose
    /// min equals its max gets the widened range [v, v + 1] so the spec stays
    /// valid; an empty stream is an error.
    pub fn covering<I: IntoIterator<Item = f64>>(k: u32, values: I) -> Result<Self, AnalyticsError> {
        let (mut min, mut max) = (f64::INFINITY, f64::NEG_INFINITY);
        for v in values {
            if !v.is_finite() {
                return Err(AnalyticsError::NonFinite(v));
            }
            min = min.min(v);
            max = max.max(v);
        }
        if min > max {
            return Err(AnalyticsError::EmptyData);
        }
        if min == max {
            return BucketSpec::new(min, min + 1.0, k);
        }
        BucketSpec::new(min, max, k)
    }

    pub fn low(&self) -> f64 {
        self.low
    }

    pub fn high(&self) -> f64 {
        self.high
    }

    pub fn k(&self) -> u32 {
        self.k
    }

    /// The j-th edge, j in 0..=k; edge(0) = low and edge(k) = high.
    pub fn edge(&self, j: u32) -> f64 {
        debug_assert!(j <= self.k);
        if j == 0 {
            self.low
        } else if j == self.k {
            self.high
        } else {
            self.low + (self.high - self.low) * (f64::from(j) / f64::from(self.k))
        }
    }

    /// All k+1 edges in nondecreasing order.
    pub fn edges(&self) -> Vec<f64> {
        (0..=self.k).map(|j| self.edge(j)).collect()
    }

    /// Bucket index for `value`: 1 + ⌊k·(value − low)/(high − low)⌋, clamped
    /// so that `high` lands in bucket k. The closed form is only a hint —
    /// the returned index is always consistent with [`Self::edge`], so a
    /// value sitting exactly on edge j goes to bucket j+1 (left-inclusive)
    /// even when the division rounds the other way.
    pub fn assign(&self, value: f64) -> Result<BucketSlot, AnalyticsError> {
        if !value.is_finite() {
            return Err(AnalyticsError::NonFinite(value));
        }
        if value < self.low {
            return Ok(BucketSlot::Below);
        }
        if value > self.high {
            return Ok(BucketSlot::Above);
        }
        let t = f64::from(self.k) * (value - self.low) / (self.high - self.low);
        let mut idx = (t.floor() as i64 + 1).clamp(1, i64::from(self.k)) as u32;
        while idx > 1 && value < self.edge(idx - 1) {
            idx -= 1;
        }
        while idx < self.k && value >= self.edge(idx) {
            idx += 1;
        }
        Ok(BucketSlot::In(idx))
    }
}

// ---------------------------------------------------------------------------
// Mergeable per-bucket statistics
// ---------------------------------------------------------------------------

/// Which denominator the standard deviation uses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StdMode {
    /// Divide by N — a logbook over the full dataset, not a sample.
    #[default]
    Population,
    /// Divide by N − 1; undefined below two values.
    Sample,
}

/// Streaming (count, sum, sum-of-squares) moments for one bucket, kept in
/// shifted form: the first value becomes the offset and later values
/// accumulate as deltas, which keeps the squared terms small.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct BucketAccumulator {
    count: u64,
    shift: f64,
    dsum: f64,
    dsum_sq: f64,
}

impl BucketAccumulator {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, value: f64) {
        if self.count == 0 {
            self.shift = value;
        }
        let d = value - self.shift;
        self.dsum += d;
        self.dsum_sq += d * d;
        self.count += 1;
    }

    /// Fold another accumulator in, rebasing its deltas onto this shift.
    /// Equals accumulating the concatenated stream in one pass.
    pub fn merge(&mut self, other: &BucketAccumulator) {
        if other.count == 0 {
            return;
        }
        if self.count == 0 {
            *self = *other;
            return;
        }
        let delta = other.shift - self.shift;
        let n = other.count as f64;
        self.dsum_sq += other.dsum_sq + 2.0 * delta * other.dsum + n * delta * delta;
        self.dsum += other.dsum + n * delta;
        self.count += other.count;
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn sum(&self) -> f64 {
        self.shift * self.count as f64 + self.dsum
    }

    pub fn sum_sq(&self) -> f64 {
        self.dsum_sq + 2.0 * self.shift * self.dsum + self.shift * self.shift * self.count as f64
    }

    pub fn mean(&self) -> Option<f64> {
        (self.count > 0).then(|| self.shift + self.dsum / self.count as f64)
    }

    pub fn variance(&self, mode: StdMode) -> Option<f64> {
        let n = self.count as f64;
        let population = match self.count {
            0 => return None,
            // Shift-invariant: Var(v) = Var(v − shift).
            _ => (self.dsum_sq / n - (self.dsum / n) * (self.dsum / n)).max(0.0),
        };
        match mode {
            StdMode::Population => Some(population),
            StdMode::Sample if self.count >= 2 => Some(population * n / (n - 1.0)),
            StdMode::Sample => None,
        }
    }

    pub fn std(&self, mode: StdMode) -> Option<f64> {
        self.variance(mode).map(f64::sqrt)
    }
}

// ---------------------------------------------------------------------------
// Histogram
// ---------------------------------------------------------------------------

/// What to do with values outside [low, high].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OverflowPolicy {
    /// Count them in below/above tallies; per-bucket counts cover in-range
    /// values only (default).
    #[default]
    Count,
    /// Treat any out-of-range value as an error.
    Error,
}

/// An equal-width histogram with per-bucket streaming moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketHistogram {
    spec: BucketSpec,
    policy: OverflowPolicy,
    cells: Vec<BucketAccumulator>,
    below: u64,
    above: u64,
}

impl BucketHistogram {
    pub fn new(spec: BucketSpec, policy: OverflowPolicy) -> Self {
        BucketHistogram {
            spec,
            policy,
            cells: vec![BucketAccumulator::new(); spec.k() as usize],
            below: 0,
            above: 0,
        }
    }

    pub fn spec(&self) -> &BucketSpec {
        &self.spec
    }

    pub fn push(&mut self, value: f64) -> Result<(), AnalyticsError> {
        match self.spec.assign(value)? {
            BucketSlot::In(j) => {
                self.cells[(j - 1) as usize].push(value);
                Ok(())
            }
            BucketSlot::Below | BucketSlot::Above if self.policy == OverflowPolicy::Error => {
                Err(AnalyticsError::OutOfRange {
                    value,
                    low: self.spec.low(),
                    high: self.spec.high(),
                })
            }
            BucketSlot::Below => {
                self.below += 1;
                Ok(())
            }
            BucketSlot::Above => {
                self.above += 1;
                Ok(())
            }
        }
    }

    /// Merge a shard histogram built over the same spec.
    pub fn merge(&mut self, other: &BucketHistogram) -> Result<(), AnalyticsError> {
        if self.spec != other.spec {
            return Err(AnalyticsError::SpecMismatch);
        }
        for (cell, theirs) in self.cells.iter_mut().zip(&other.cells) {
            cell.merge(theirs);
        }
        self.below += other.below;
        self.above += other.above;
        Ok(())
    }

    /// Accumulator for 1-based bucket `j`.
    pub fn cell(&self, j: u32) -> &BucketAccumulator {
        &self.cells[(j - 1) as usize]
    }

    pub fn below(&self) -> u64 {
        self.below
    }

    pub fn above(&self) -> u64 {
        self.above
    }

    /// Number of in-range values — always the sum of per-bucket counts.
    pub fn in_range(&self) -> u64 {
        self.cells.iter().map(BucketAccumulator::count).sum()
    }

    pub fn report(&self, mode: StdMode) -> BucketReport {
        let rows = (1..=self.spec.k())
            .map(|j| {
                let cell = self.cell(j);
                BucketRow {
                    bucket: j,
                    low_edge: self.spec.edge(j - 1),
                    high_edge: self.spec.edge(j),
                    count: cell.count(),
                    mean: cell.mean(),
                    std: cell.std(mode),
                }
            })
            .collect();
        BucketReport {
            metric: None,
            low: self.spec.low(),
            high: self.spec.high(),
            k: self.spec.k(),
            rows,
            below: self.below,
            above: self.above,
            in_range: self.in_range(),
        }
    }
}

/// Bucket every value of a stream and report count/mean/std per bucket.
/// Out-of-range values land in the below/above tallies.
pub fn bucket_stats<I: IntoIterator<Item = f64>>(
    values: I,
    spec: BucketSpec,
) -> Result<BucketReport, AnalyticsError> {
    let mut hist = BucketHistogram::new(spec, OverflowPolicy::Count);
    for v in values {
        hist.push(v)?;
    }
    Ok(hist.report(StdMode::Population))
}

// ---------------------------------------------------------------------------
// Reports
// ---------------------------------------------------------------------------

/// One histogram row. Mean and std are absent when the bucket is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketRow {
    pub bucket: u32,
    pub low_edge: f64,
    pub high_edge: f64,
    pub count: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mean: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub std: Option<f64>,
}

/// A rendered histogram: one row per bucket plus range metadata. Edges are
/// always included so the table is unambiguous without the source data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BucketReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub metric: Option<String>,
    pub low: f64,
    pub high: f64,
    pub k: u32,
    pub rows: Vec<BucketRow>,
    pub below: u64,
    pub above: u64,
    pub in_range: u64,
}

impl BucketReport {
    pub fn with_metric(mut self, metric: impl Into<String>) -> Self {
        self.metric = Some(metric.into());
        self
    }

    /// Aligned text table, one row per bucket.
    pub fn render_table(&self) -> String {
        let mut out = String::new();
        if let Some(metric) = &self.metric {
            out.push_str(&format!("metric: {metric}\n"));
        }
        out.push_str(&format!(
            "{:>6}  {:>12}  {:>12}  {:>10}  {:>12}  {:>12}\n",
            "bucket", "low", "high", "count", "mean", "std"
        ));
        for row in &self.rows {
            let mean = row.mean.map_or_else(|| "-".into(), |m| format!("{m:.6}"));
            let std = row.std.map_or_else(|| "-".into(), |s| format!("{s:.6}"));
            out.push_str(&format!(
                "{:>6}  {:>12.4}  {:>12.4}  {:>10}  {:>12}  {:>12}\n",
                row.bucket,
                row.low_edge,
                row.high_edge,
                group_thousands(row.count),
                mean,
                std
            ));
        }
        if self.below > 0 {
            out.push_str(&format!("below range: {}\n", group_thousands(self.below)));
        }
        if self.above > 0 {
            out.push_str(&format!("above range: {}\n", group_thousands(self.above)));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Stage logbook
// ---------------------------------------------------------------------------

/// One pipeline stage's record counts.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageEntry {
    pub stage: String,
    pub input: u64,
    pub output: u64,
}

/// The stage-by-stage funnel. Counts are nonincreasing by construction:
/// recording a stage whose output exceeds its input, or whose input does not
/// match the previous stage's output, is an error.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageLogbook {
    stages: Vec<StageEntry>,
}

impl StageLogbook {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn record(
        &mut self,
        stage: impl Into<String>,
        input: u64,
        output: u64,
    ) -> Result<(), AnalyticsError> {
        let stage = stage.into();
        if output > input {
            return Err(AnalyticsError::StageGrowth { stage, input, output });
        }
        if let Some(last) = self.stages.last() {
            if input != last.output {
                return Err(AnalyticsError::StageChain {
                    stage,
                    input,
                    previous: last.output,
                });
            }
        }
        self.stages.push(StageEntry { stage, input, output });
        Ok(())
    }

    pub fn entries(&self) -> &[StageEntry] {
        &self.stages
    }

    pub fn is_empty(&self) -> bool {
        self.stages.is_empty()
    }

    pub fn initial_input(&self) -> Option<u64> {
        self.stages.first().map(|s| s.input)
    }

    pub fn final_output(&self) -> Option<u64> {
        self.stages.last().map(|s| s.output)
    }

    /// The funnel as aligned text with thousands separators.
    pub fn render(&self) -> String {
        let name_width = self.stages.iter().map(|s| s.stage.len()).max().unwrap_or(5).max(5);
        let count_width = self
            .stages
            .iter()
            .flat_map(|s| [s.input, s.output])
            .map(|c| group_thousands(c).len())
            .max()
            .unwrap_or(1);
        let mut out = String::new();
        for entry in &self.stages {
            let kept = if entry.input == 0 {
                "-".to_string()
            } else {
                format!("{:.2}% kept", entry.output as f64 / entry.input as f64 * 100.0)
            };
            out.push_str(&format!(
                "{:<name_width$}  {:>count_width$} -> {:>count_width$}  {kept}\n",
                entry.stage,
                group_thousands(entry.input),
                group_thousands(entry.output),
            ));
        }
        out
    }
}

/// 39149128 → "39,149,128".
pub fn group_thousands(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::with_capacity(digits.len() + digits.len() / 3);
    for (i, c) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i) % 3 == 0 {
            out.push(',');
        }
        out.push(c);
    }
    out
}

// ---------------------------------------------------------------------------
// Word frequency
// ---------------------------------------------------------------------------

/// Token counts over a caption corpus, lowercased and stopword-filtered.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct WordFrequency {
    counts: BTreeMap<String, u64>,
}

impl WordFrequency {
    pub fn get(&self, token: &str) -> u64 {
        self.counts.get(token).copied().unwrap_or(0)
    }

    pub fn len(&self) -> usize {
        self.counts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn counts(&self) -> &BTreeMap<String, u64> {
        &self.counts
    }

    /// The `n` most frequent tokens, count descending, ties token-ascending.
    pub fn top(&self, n: usize) -> Vec<(&str, u64)> {
        let mut pairs: Vec<(&str, u64)> =
            self.counts.iter().map(|(t, &c)| (t.as_str(), c)).collect();
        pairs.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(b.0)));
        pairs.truncate(n);
        pairs
    }
}

/// Count tokens across `texts`: split on non-alphanumeric characters,
/// lowercase, drop stopwords.
pub fn word_frequency<'a, I, S>(texts: I, stopwords: &HashSet<S>) -> WordFrequency
where
    I: IntoIterator<Item = &'a str>,
    S: Borrow<str> + Eq + Hash,
{
    let mut counts = BTreeMap::new();
    for text in texts {
        for raw in text.split(|c: char| !c.is_alphanumeric()) {
            if raw.is_empty() {
                continue;
            }
            let token = raw.to_lowercase();
            if stopwords.contains(token.as_str()) {
                continue;
            }
            *counts.entry(token).or_insert(0) += 1;
        }
    }
    WordFrequency { counts }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
