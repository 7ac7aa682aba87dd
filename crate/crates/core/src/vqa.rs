//! Text–image alignment harness: pose a standardized yes/no question per
//! image–caption pair to a pluggable VQA backend and report the mean "yes"
//! probability.
//!
//! The harness never runs a model itself — backends live behind
//! [`VqaClient`] — and never clamps: a probability outside [0, 1] is a
//! protocol violation, not data. Failed pairs are retried, then recorded as
//! explicit gaps; gaps are excluded from the mean only when the caller opts
//! in, so a report can never silently average over fewer pairs than asked.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::client::{ClientError, RetryPolicy};
use crate::par::par_map_indexed;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

#[derive(Debug, thiserror::Error)]
pub enum VqaError {
    #[error("caption is empty after trimming")]
    EmptyCaption,
    #[error("pair {id:?}: caption is empty after trimming")]
    EmptyPairCaption { id: String },
    #[error("no pairs to score")]
    NoPairs,
    #[error("pair {id:?}: client returned probability {value} outside [0, 1]")]
    OutOfRange { id: String, value: f64 },
    #[error("pair {id:?}: {source}")]
    Client { id: String, source: ClientError },
    #[error("every pair failed; refusing to report an empty mean")]
    AllPairsFailed,
    #[error("{gaps} of {total} pairs failed after retries; pass allow_gaps to average the rest")]
    GapsPresent { gaps: u64, total: u64 },
}

// ---------------------------------------------------------------------------
// Query construction
// ---------------------------------------------------------------------------

const QUERY_PREFIX: &str = "Is the figure showing: ";

/// The standardized alignment question for one caption: the template applied
/// verbatim, no other normalization — a trailing "." stays, "?" is appended
/// after it.
pub fn build_query(caption: &str) -> Result<String, VqaError> {
    if caption.trim().is_empty() {
        return Err(VqaError::EmptyCaption);
    }
    Ok(format!("{QUERY_PREFIX}{caption}?"))
}

// ---------------------------------------------------------------------------
// Client contract
// ---------------------------------------------------------------------------

/// A VQA backend: returns the probability of the literal answer "yes" to
/// `question` about the image at `uri`. How the backend extracts that
/// probability (token logit, calibrated head) is its own concern.
pub trait VqaClient: Send + Sync {
    fn p_yes(&self, id: &str, uri: &str, question: &str) -> Result<f64, ClientError>;
}

/// Stub backend answering every question with one constant.
#[derive(Debug, Clone, Copy)]
pub struct ConstantVqa(pub f64);

impl VqaClient for ConstantVqa {
    fn p_yes(&self, _id: &str, _uri: &str, _question: &str) -> Result<f64, ClientError> {
        Ok(self.0)
    }
}

// ---------------------------------------------------------------------------
// Pairs and reports
// ---------------------------------------------------------------------------

/// One image–caption pair to score.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalPair {
    pub id: String,
    pub uri: String,
    pub caption: String,
}

/// Scoring options.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EvalOptions {
    /// Retries per pair for transient failures.
    pub retries: u32,
    /// Initial backoff between retries, doubling each attempt.
    pub backoff: Duration,
    /// Bounded client-request fan-out.
    pub fanout: usize,
    /// Permit gaps (pairs that failed after retries) and average the rest.
    pub allow_gaps: bool,
    /// Backend name recorded in the report.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            retries: 2,
            backoff: Duration::from_millis(100),
            fanout: 4,
            allow_gaps: false,
            model: None,
        }
    }
}

/// One scored pair. A gap serializes as an explicit `"p_yes": null`, never
/// silently dropped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairRow {
    pub id: String,
    pub uri: String,
    pub p_yes: Option<f64>,
}

/// The alignment report: per-pair rows in input order plus the mean
/// probability over scored pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AlignmentReport {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    pub rows: Vec<PairRow>,
    pub mean: f64,
    pub scored: u64,
    pub gaps: u64,
}

impl AlignmentReport {
    /// Internal-consistency violations, for reports read back from disk.
    pub fn validate(&self) -> Vec<String> {
        let mut out = Vec::new();
        let scored = self.rows.iter().filter(|r| r.p_yes.is_some()).count() as u64;
        let gaps = self.rows.len() as u64 - scored;
        if scored != self.scored || gaps != self.gaps {
            out.push(format!(
                "row tallies ({scored} scored, {gaps} gaps) disagree with header ({}, {})",
                self.scored, self.gaps
            ));
        }
        if self.scored == 0 {
            out.push("report contains no scored pairs".into());
        }
        for row in &self.rows {
            if let Some(p) = row.p_yes {
                if !p.is_finite() || !(0.0..=1.0).contains(&p) {
                    out.push(format!("pair {:?}: probability {p} outside [0, 1]", row.id));
                }
            }
        }
        if self.scored > 0 && (!self.mean.is_finite() || !(0.0..=1.0).contains(&self.mean)) {
            out.push(format!("mean {} outside [0, 1]", self.mean));
        }
        out
    }
}

// ---------------------------------------------------------------------------
// Scoring
// ---------------------------------------------------------------------------

/// Score every pair and aggregate. One probability per pair, order-aligned
/// with the input. Transient failures are retried per `options`, then
/// recorded as gaps; a protocol violation (including any probability outside
/// [0, 1]) fails the run at the first offending pair in input order.
pub fn score_pairs(
    pairs: &[EvalPair],
    client: &dyn VqaClient,
    options: &EvalOptions,
) -> Result<AlignmentReport, VqaError> {
    if pairs.is_empty() {
        return Err(VqaError::NoPairs);
    }
    for pair in pairs {
        if pair.caption.trim().is_empty() {
            return Err(VqaError::EmptyPairCaption { id: pair.id.clone() });
        }
    }
    let retry = RetryPolicy { retries: options.retries, backoff: options.backoff };
    let outcomes = par_map_indexed(pairs, options.fanout.max(1), |_, pair| {
        let question = build_query(&pair.caption).expect("captions pre-checked non-empty");
        retry.run(|| client.p_yes(&pair.id, &pair.uri, &question))
    });

    // Fatal conditions are reported for the first offending pair in input
    // order, independent of worker scheduling.
    let mut rows = Vec::with_capacity(pairs.len());
    for (pair, outcome) in pairs.iter().zip(outcomes) {
        let p_yes = match outcome {
            Ok(p) if !p.is_finite() || !(0.0..=1.0).contains(&p) => {
                return Err(VqaError::OutOfRange { id: pair.id.clone(), value: p });
            }
            Ok(p) => Some(p),
            Err(ClientError::Retryable(_)) => None,
            Err(source @ ClientError::Protocol(_)) => {
                return Err(VqaError::Client { id: pair.id.clone(), source });
            }
        };
        rows.push(PairRow { id: pair.id.clone(), uri: pair.uri.clone(), p_yes });
    }

    let scored = rows.iter().filter(|r| r.p_yes.is_some()).count() as u64;
    let gaps = rows.len() as u64 - scored;
    if scored == 0 {
        return Err(VqaError::AllPairsFailed);
    }
    if gaps > 0 && !options.allow_gaps {
        return Err(VqaError::GapsPresent { gaps, total: rows.len() as u64 });
    }
    let sum: f64 = rows.iter().filter_map(|r| r.p_yes).sum();
    Ok(AlignmentReport {
        model: options.model.clone(),
        rows,
        mean: sum / scored as f64,
        scored,
        gaps,
    })
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------
