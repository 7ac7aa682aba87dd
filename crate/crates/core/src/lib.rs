//! Core library for `capsieve`: a streaming curation pipeline for
//! image–caption datasets.
//!
//! The crate is organized around a line-delimited manifest of
//! [`manifest::ManifestRecord`]s that flows through a sequence of stages:
//!
//! * [`geometry`] — size/aspect gating and center-crop geometry,
//! * [`scoring`] — luminance, text-coverage (OCR) and aesthetic scoring plus
//!   the combined keep/reject predicate,
//! * [`caption`] — the four-slot structured caption grammar: parsing,
//!   validation, slot shuffling/canonicalization, marker rewriting and
//!   defect detection,
//! * [`analytics`] — mergeable bucket histograms, stage funnel logbooks and
//!   word-frequency stats,
//! * [`vqa`] — the text–image alignment evaluation harness,
//! * [`pipeline`] — deterministic, resumable orchestration of the above.
//!
//! [`synth`] generates seeded synthetic fixtures so the whole pipeline can be
//! exercised at desk scale without any real images or model backends.

pub mod analytics;
pub mod caption;
pub mod client;
pub mod geometry;
pub mod manifest;
pub mod pipeline;
pub mod scoring;
pub mod stopwords;
pub mod synth;
pub mod vqa;

mod par;
