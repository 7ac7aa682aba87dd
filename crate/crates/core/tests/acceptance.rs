//! Acceptance gate: every shipping guarantee, checked end to end against
//! independent oracles. Each test prints one `acceptance: PASS …` line; a
//! failing guarantee fails its test.
//!
//! These tests freeze the operating point (1024/0.6666 geometry gate,
//! aesthetic > 4.73, luminance in [12.75, 204.00], OCR < 0.1 or >= 0.6,
//! confidence >= 0.7 in a 736x736 detector frame) and the determinism
//! contract: byte-identical reruns, worker-count independence, and exact
//! permutation round-trips on structured captions.

use std::collections::BTreeSet;
use std::time::Instant;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use capsieve_core::analytics::{
    bucket_stats, BucketAccumulator, BucketSlot, BucketSpec, OverflowPolicy,
};
use capsieve_core::analytics::BucketHistogram;
use capsieve_core::caption::{
    canonicalize, parse_caption, render, rewrite_markers, MarkerStyle, Permutation4, shuffle,
    StructuredCaption,
};
use capsieve_core::manifest::{
    file_digest, read_all_path, write_manifest_path, ManifestRecord, ReadOptions, ScoreSet,
};
use capsieve_core::pipeline::{
    run_pipeline, PipelineConfig, StageClients, StageKind,
};
use capsieve_core::scoring::{
    keep_decision, luminance_score, ocr_score, FilterConfig, TextPolygon,
};
use capsieve_core::stopwords::default_stopwords;
use capsieve_core::synth::{random_caption, random_convex_quad, synthetic_records};
use capsieve_core::vqa::{score_pairs, ConstantVqa, EvalOptions, EvalPair};
use capsieve_core::analytics::word_frequency;

fn pass(name: &str, detail: &str) {
    println!("acceptance: PASS  {name}  ({detail})");
}

// ---------------------------------------------------------------------------
// 1. Luminance matches a naive per-pixel oracle; white and black are exact.
// ---------------------------------------------------------------------------

#[test]
fn luminance_matches_naive_oracle_on_random_images() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);

    for _ in 0..100 {
        let pixels: Vec<[u8; 3]> = (0..64)
            .map(|_| [rng.random::<u8>(), rng.random::<u8>(), rng.random::<u8>()])
            .collect();
        let got = luminance_score(pixels.iter().copied()).unwrap();
        let naive: f64 = pixels
            .iter()
            .map(|&[r, g, b]| 0.2126 * r as f64 + 0.7152 * g as f64 + 0.0722 * b as f64)
            .sum::<f64>()
            / pixels.len() as f64;
        let scale = naive.abs().max(1.0);
        assert!(
            (got - naive).abs() / scale <= 1e-9,
            "luminance {got} deviates from the naive oracle {naive}"
        );
    }

    let white = luminance_score(std::iter::repeat_n([255u8, 255, 255], 64)).unwrap();
    assert_eq!(white, 255.0, "all-white frame must score exactly 255");
    let black = luminance_score(std::iter::repeat_n([0u8, 0, 0], 64)).unwrap();
    assert_eq!(black, 0.0, "all-black frame must score exactly 0");

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, budget is 1s");
    pass(
        "luminance-oracle",
        &format!("100 random 8x8 images within 1e-9, white=255 black=0 exact, {elapsed:?}"),
    );
}

// ---------------------------------------------------------------------------
// 2. OCR score matches shoelace-by-hand x confidence / side^2; sub-cutoff
//    confidence contributes nothing.
// ---------------------------------------------------------------------------

fn shoelace_by_hand(vertices: &[(f64, f64)]) -> f64 {
    let n = vertices.len();
    let mut twice = 0.0;
    for i in 0..n {
        let (x1, y1) = vertices[i];
        let (x2, y2) = vertices[(i + 1) % n];
        twice += x1 * y2 - x2 * y1;
    }
    twice.abs() / 2.0
}

#[test]
fn ocr_score_matches_hand_shoelace_on_random_quads() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let cfg = FilterConfig::default();
    let frame = cfg.detector_side as f64;

    for i in 0..200 {
        let vertices = random_convex_quad(&mut rng, frame);
        // Exercise the inclusive boundary on every tenth polygon.
        let confidence = if i % 10 == 0 { 0.7 } else { rng.random_range(0.7..=1.0) };
        let poly = TextPolygon::new(vertices.clone(), confidence).unwrap();
        let got = ocr_score(&[poly], &cfg).unwrap();
        let expected = shoelace_by_hand(&vertices) * confidence / (frame * frame);
        assert!(
            (got - expected).abs() <= 1e-9,
            "ocr score {got} deviates from hand shoelace {expected}"
        );
    }

    // Just below the confidence cutoff: the polygon contributes zero.
    let vertices = random_convex_quad(&mut rng, frame);
    let faint = TextPolygon::new(vertices, 0.699).unwrap();
    assert_eq!(ocr_score(&[faint], &cfg).unwrap(), 0.0);

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 1.0, "took {elapsed:?}, budget is 1s");
    pass(
        "ocr-shoelace-oracle",
        &format!("200 quads within 1e-9, confidence 0.699 contributes 0, {elapsed:?}"),
    );
}

// ---------------------------------------------------------------------------
// 3. Shoelace area agrees with Monte Carlo rasterization.
// ---------------------------------------------------------------------------

fn inside_convex(vertices: &[(f64, f64)], px: f64, py: f64) -> bool {
    // Consistent orientation: every edge cross product keeps one sign.
    let n = vertices.len();
    let mut sign = 0.0f64;
    for i in 0..n {
        let (x1, y1) = vertices[i];
        let (x2, y2) = vertices[(i + 1) % n];
        let cross = (x2 - x1) * (py - y1) - (y2 - y1) * (px - x1);
        if cross != 0.0 {
            if sign == 0.0 {
                sign = cross.signum();
            } else if cross.signum() != sign {
                return false;
            }
        }
    }
    true
}

#[test]
fn shoelace_area_matches_monte_carlo_rasterization() {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    const SAMPLES: usize = 1_000_000;

    for _ in 0..20 {
        let vertices = random_convex_quad(&mut rng, 736.0);
        let area = shoelace_by_hand(&vertices);

        let min_x = vertices.iter().map(|v| v.0).fold(f64::INFINITY, f64::min);
        let max_x = vertices.iter().map(|v| v.0).fold(f64::NEG_INFINITY, f64::max);
        let min_y = vertices.iter().map(|v| v.1).fold(f64::INFINITY, f64::min);
        let max_y = vertices.iter().map(|v| v.1).fold(f64::NEG_INFINITY, f64::max);
        let box_area = (max_x - min_x) * (max_y - min_y);

        let mut hits = 0usize;
        for _ in 0..SAMPLES {
            let px = rng.random_range(min_x..max_x);
            let py = rng.random_range(min_y..max_y);
            if inside_convex(&vertices, px, py) {
                hits += 1;
            }
        }
        let estimate = box_area * hits as f64 / SAMPLES as f64;
        let relative = (estimate - area).abs() / area;
        assert!(
            relative <= 0.01,
            "Monte Carlo estimate {estimate} is {:.3}% from shoelace {area}",
            relative * 100.0
        );
    }
    pass(
        "shoelace-monte-carlo",
        "20 quads x 1e6 samples agree within 1%",
    );
}

// ---------------------------------------------------------------------------
// 4. keep_decision equals the conjunction of three independent rule checks.
// ---------------------------------------------------------------------------

#[test]
fn keep_decision_matches_independent_rule_conjunction() {
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let cfg = FilterConfig::default();

    let mut accepted = 0u64;
    for _ in 0..100_000 {
        // Mix smooth draws with point masses at every decision boundary.
        let aesthetic = match rng.random_range(0..10) {
            0 => 4.73,
            _ => rng.random_range(3.0..6.5),
        };
        let luminance = match rng.random_range(0..10) {
            0 => 12.75,
            1 => 204.0,
            _ => rng.random_range(0.0..255.0),
        };
        let ocr = match rng.random_range(0..10) {
            0 => 0.1,
            1 => 0.6,
            2 => 0.0,
            _ => rng.random_range(0.0..1.2),
        };
        let scores = ScoreSet {
            aesthetic: Some(aesthetic),
            luminance: Some(luminance),
            ocr: Some(ocr),
        };
        let got = keep_decision(&scores, &cfg).unwrap().is_accepted();
        let expected = aesthetic > 4.73
            && (12.75..=204.0).contains(&luminance)
            && (ocr < 0.1 || ocr >= 0.6);
        assert_eq!(
            got, expected,
            "disagreement at aesthetic={aesthetic} luminance={luminance} ocr={ocr}"
        );
        accepted += got as u64;
    }
    assert!(accepted > 0, "fuzz distribution must exercise the accept branch");
    pass(
        "threshold-conjunction",
        &format!("100000 fuzzed score sets, zero disagreements, {accepted} accepted"),
    );
}

// ---------------------------------------------------------------------------
// 5. Bucket machinery: exact merge, oracle-equal assignment, contained means.
// ---------------------------------------------------------------------------

/// The bucket for `v` found by scanning the printed edges directly:
/// left-inclusive everywhere, right-inclusive on the last bucket.
fn edge_scan(spec: &BucketSpec, v: f64) -> BucketSlot {
    let edges = spec.edges();
    let k = edges.len() - 1;
    if v < edges[0] {
        return BucketSlot::Below;
    }
    if v > edges[k] {
        return BucketSlot::Above;
    }
    if v == edges[k] {
        return BucketSlot::In(k as u32);
    }
    for j in 0..k {
        if v >= edges[j] && v < edges[j + 1] {
            return BucketSlot::In((j + 1) as u32);
        }
    }
    unreachable!("edge scan covers [low, high]");
}

#[test]
fn bucket_merge_and_assignment_match_oracles() {
    let mut rng = ChaCha8Rng::seed_from_u64(505);

    // Dyadic values (multiples of 1/256) keep every sum exact below 2^53,
    // so merged and single-pass accumulators must agree to the bit.
    let values: Vec<f64> =
        (0..10_000).map(|_| rng.random_range(0..=65_280u32) as f64 / 256.0).collect();
    let mut single = BucketAccumulator::new();
    for &v in &values {
        single.push(v);
    }
    let reference = (single.count(), single.sum().to_bits(), single.sum_sq().to_bits());

    for _ in 0..50 {
        let parts = rng.random_range(2..=8usize);
        let mut cuts: Vec<usize> =
            (0..parts - 1).map(|_| rng.random_range(0..=values.len())).collect();
        cuts.push(0);
        cuts.push(values.len());
        cuts.sort_unstable();
        let mut merged = BucketAccumulator::new();
        for pair in cuts.windows(2) {
            let mut chunk = BucketAccumulator::new();
            for &v in &values[pair[0]..pair[1]] {
                chunk.push(v);
            }
            merged.merge(&chunk);
        }
        let triple = (merged.count(), merged.sum().to_bits(), merged.sum_sq().to_bits());
        assert_eq!(triple, reference, "merged moments differ from single pass");
    }

    // Assignment equals the edge-scan oracle over a 10^4-value grid that
    // includes every exact edge.
    let spec = BucketSpec::new(0.0, 255.0, 20).unwrap();
    for i in 0..10_000u32 {
        let v = 255.0 * i as f64 / 9_999.0;
        assert_eq!(spec.assign(v).unwrap(), edge_scan(&spec, v), "value {v}");
    }
    for edge in spec.edges() {
        assert_eq!(spec.assign(edge).unwrap(), edge_scan(&spec, edge), "edge {edge}");
    }

    // Per-bucket means land inside their own edges.
    let report = bucket_stats(values.iter().copied(), spec).unwrap();
    for row in &report.rows {
        if let Some(mean) = row.mean {
            assert!(
                row.low_edge <= mean && mean <= row.high_edge,
                "bucket {} mean {mean} escapes [{}, {}]",
                row.bucket,
                row.low_edge,
                row.high_edge
            );
        }
    }

    pass(
        "bucket-machinery",
        "50 merge splits bit-exact, 10000-value grid matches edge scan, means contained",
    );
}

// ---------------------------------------------------------------------------
// 6. Orbit invariance: every permutation round-trips to the same canonical
//    caption.
// ---------------------------------------------------------------------------

#[test]
fn slot_shuffles_recover_canonical_form_for_all_permutations() {
    let started = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(606);

    for _ in 0..1_000 {
        let caption = random_caption(&mut rng);
        let reference = render(&caption, MarkerStyle::Numeric);
        for g in Permutation4::all() {
            let shuffled = shuffle(&caption, g, MarkerStyle::Numeric);
            let recovered = canonicalize(&shuffled, g).unwrap();
            assert_eq!(recovered, caption, "permutation {:?} lost the caption", g.mapping());
            assert_eq!(
                render(&recovered, MarkerStyle::Numeric),
                reference,
                "canonical form differs under permutation {:?}",
                g.mapping()
            );
        }
    }

    let elapsed = started.elapsed();
    assert!(elapsed.as_secs_f64() < 10.0, "took {elapsed:?}, budget is 10s");
    pass(
        "shuffle-orbit-invariance",
        &format!("1000 captions x 24 permutations, zero failures, {elapsed:?}"),
    );
}

// ---------------------------------------------------------------------------
// 7. Grammar round-trip and marker rewriting.
// ---------------------------------------------------------------------------

#[test]
fn caption_grammar_roundtrips_and_rewrite_is_idempotent() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut decimal_captions = 0usize;

    let check = |caption: &StructuredCaption| {
        for style in [MarkerStyle::Numeric, MarkerStyle::Tilde] {
            let text = render(caption, style);
            let (parsed, seen_style) = parse_caption(&text).unwrap();
            assert_eq!(&parsed, caption, "round-trip loss in {text:?}");
            assert_eq!(seen_style, style);
        }
        let numeric = render(caption, MarkerStyle::Numeric);
        let rewritten = rewrite_markers(&numeric).unwrap();
        let again = rewrite_markers(&rewritten).unwrap();
        assert_eq!(again, rewritten, "rewrite is not idempotent on {numeric:?}");
        let (via_rewrite, style) = parse_caption(&rewritten).unwrap();
        assert_eq!(style, MarkerStyle::Tilde);
        assert_eq!(via_rewrite.slots(), caption.slots(), "rewrite altered slot content");
    };

    for _ in 0..1_000 {
        let caption = random_caption(&mut rng);
        if caption.slots().iter().any(|s| s.contains("3.14")) {
            decimal_captions += 1;
        }
        check(&caption);
    }

    // One caption with decimal numerals in every slot that allows them,
    // pinned rather than left to the random draw.
    let pinned = StructuredCaption::new(
        "A brass orrery at 1.4 scale",
        "on a drafting table",
        "warm aesthetic glow rated 4.20",
        "macro camera shot at f/3.14",
    )
    .unwrap();
    check(&pinned);
    decimal_captions += 1;

    assert!(decimal_captions > 0, "the set must include decimal-numeral captions");
    pass(
        "grammar-round-trip",
        &format!(
            "1001 captions x 2 styles round-trip, rewrite idempotent, {decimal_captions} with decimals"
        ),
    );
}

// ---------------------------------------------------------------------------
// 8. End-to-end funnel against an oracle-predicted accepted set.
// ---------------------------------------------------------------------------

fn oracle_accepts(record: &ManifestRecord) -> bool {
    let (w, h) = (record.width.unwrap(), record.height.unwrap());
    if w.min(h) < 1024 {
        return false;
    }
    if (w.min(h) as f64) / (w.max(h) as f64) < 0.6666 {
        return false;
    }
    let aesthetic = record.scores.aesthetic.unwrap();
    let luminance = record.scores.luminance.unwrap();
    let ocr = record.scores.ocr.unwrap();
    aesthetic > 4.73 && (12.75..=204.0).contains(&luminance) && (ocr < 0.1 || ocr >= 0.6)
}

#[test]
fn pipeline_funnel_matches_precomputed_accepted_set() {
    let dir = tempfile::tempdir().unwrap();
    let records = synthetic_records(200, 808);
    let expected: BTreeSet<String> =
        records.iter().filter(|r| oracle_accepts(r)).map(|r| r.id.clone()).collect();
    assert!(!expected.is_empty(), "oracle must accept some of the 200 records");
    assert!(expected.len() < 200, "oracle must reject some of the 200 records");

    let input = dir.path().join("input.jsonl");
    write_manifest_path(records.iter(), &input).unwrap();
    let cfg = PipelineConfig {
        stages: vec![StageKind::Prefilter, StageKind::Score, StageKind::Filter],
        buckets: Vec::new(),
        ..PipelineConfig::default()
    };

    let run = |out: &std::path::Path, workers: usize| {
        let cfg = PipelineConfig { workers, ..cfg.clone() };
        run_pipeline(&cfg, &input, out, &StageClients::default(), false).unwrap()
    };

    let first = run(&dir.path().join("a"), 1);
    let survivors = read_all_path(
        &first.final_manifest,
        &ReadOptions { error_budget: 0, check_duplicates: true },
    )
    .unwrap();
    let got: BTreeSet<String> = survivors.records.iter().map(|r| r.id.clone()).collect();
    assert_eq!(got, expected, "accepted set differs from the oracle prediction");

    for pair in first.logbook.entries().windows(2) {
        assert_eq!(pair[0].output, pair[1].input, "funnel counts must chain");
    }
    for entry in first.logbook.entries() {
        assert!(entry.output <= entry.input, "funnel counts must be nonincreasing");
    }

    let again = run(&dir.path().join("b"), 1);
    assert_eq!(
        file_digest(&first.final_manifest).unwrap(),
        file_digest(&again.final_manifest).unwrap(),
        "rerun must be byte-identical"
    );
    assert_eq!(
        file_digest(&dir.path().join("a/logbook.json")).unwrap(),
        file_digest(&dir.path().join("b/logbook.json")).unwrap(),
    );

    let wide = run(&dir.path().join("w8"), 8);
    assert_eq!(
        file_digest(&first.final_manifest).unwrap(),
        file_digest(&wide.final_manifest).unwrap(),
        "worker counts 1 and 8 must give identical bytes"
    );

    pass(
        "pipeline-funnel-oracle",
        &format!(
            "200 records -> {} accepted exactly as predicted, rerun and 8-worker digests equal",
            expected.len()
        ),
    );
}

// ---------------------------------------------------------------------------
// 9. Corpus word statistics surface the template's signature tokens.
// ---------------------------------------------------------------------------

#[test]
fn synthesized_corpus_ranks_template_tokens_in_top_ten() {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let texts: Vec<String> =
        (0..10_000).map(|_| render(&random_caption(&mut rng), MarkerStyle::Numeric)).collect();
    let frequency = word_frequency(texts.iter().map(String::as_str), default_stopwords());
    let top: Vec<&str> = frequency.top(10).into_iter().map(|(token, _)| token).collect();
    assert!(top.contains(&"camera"), "top 10 was {top:?}");
    assert!(top.contains(&"aesthetic"), "top 10 was {top:?}");
    pass(
        "word-frequency-echo",
        &format!("10000 captions, top 10 = {top:?}"),
    );
}

// ---------------------------------------------------------------------------
// 10. Alignment harness: exact constant mean, faithful ranking.
// ---------------------------------------------------------------------------

#[test]
fn stub_alignment_scores_mean_and_ranking() {
    let mut rng = ChaCha8Rng::seed_from_u64(1010);
    let pairs: Vec<EvalPair> = (0..10)
        .map(|i| EvalPair {
            id: format!("pair-{i:02}"),
            uri: format!("file:///eval/pair-{i:02}.png"),
            caption: render(&random_caption(&mut rng), MarkerStyle::Numeric),
        })
        .collect();
    let options = EvalOptions::default();

    let constant = score_pairs(&pairs, &ConstantVqa(0.75), &options).unwrap();
    assert_eq!(constant.mean, 0.75, "constant stub must average to exactly 0.75");
    assert_eq!(constant.scored, 10);
    assert_eq!(constant.gaps, 0);

    let structured = score_pairs(&pairs, &ConstantVqa(0.83), &options).unwrap();
    let shuffled = score_pairs(&pairs, &ConstantVqa(0.80), &options).unwrap();
    assert!(
        structured.mean > shuffled.mean,
        "0.83 backend must outrank 0.80 ({} vs {})",
        structured.mean,
        shuffled.mean
    );

    pass(
        "alignment-harness",
        &format!(
            "constant 0.75 exact over 10 pairs; 0.83 vs 0.80 ranked {:.2} > {:.2}",
            structured.mean, shuffled.mean
        ),
    );
}

// ---------------------------------------------------------------------------
// 11. Throughput: filter + bucket work sustains 10k records/s.
// ---------------------------------------------------------------------------

#[test]
fn filter_and_bucket_stages_sustain_throughput() {
    let records = synthetic_records(20_000, 1111);
    let cfg = FilterConfig::default();
    let luminance_spec = BucketSpec::new(0.0, 255.0, 20).unwrap();
    let aesthetic_spec = BucketSpec::new(0.0, 10.0, 10).unwrap();
    let ocr_spec = BucketSpec::new(0.0, 1.0, 10).unwrap();

    let started = Instant::now();
    let mut accepted = 0u64;
    let mut luminance = BucketHistogram::new(luminance_spec, OverflowPolicy::Count);
    let mut aesthetic = BucketHistogram::new(aesthetic_spec, OverflowPolicy::Count);
    let mut ocr = BucketHistogram::new(ocr_spec, OverflowPolicy::Count);
    for record in &records {
        if keep_decision(&record.scores, &cfg).unwrap().is_accepted() {
            accepted += 1;
        }
        luminance.push(record.scores.luminance.unwrap()).unwrap();
        aesthetic.push(record.scores.aesthetic.unwrap()).unwrap();
        ocr.push(record.scores.ocr.unwrap()).unwrap();
    }
    let elapsed = started.elapsed();
    std::hint::black_box((&luminance, &aesthetic, &ocr, accepted));

    let rate = records.len() as f64 / elapsed.as_secs_f64();
    assert!(
        rate >= 10_000.0,
        "filter+bucket work ran at {rate:.0} records/s, below the 10000 records/s floor"
    );
    pass(
        "stage-throughput",
        &format!("{rate:.0} records/s over 20000 sidecar-scored records ({elapsed:?})"),
    );
}
