//! Deterministic synthetic fixtures: manifests with preassigned scores,
//! template captions, convex text polygons, sidecar files, and pixel
//! buffers. Everything derives from an explicit seed so fixtures are
//! reproducible across runs, platforms, and worker counts.
//!
//! Caption text is built from slot templates so corpus statistics behave
//! like real template output: "camera" and "aesthetic" appear in every
//! caption while filler vocabulary is spread across pools, and a slice of
//! captions carries decimal numerals to exercise marker-boundary handling.

use rand::prelude::IndexedRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::caption::{render, MarkerStyle, StructuredCaption};
use crate::client::ClientError;
use crate::geometry::PixelBuffer;
use crate::manifest::{ManifestRecord, ScoreSet};
use crate::pipeline::PixelSource;

// ---------------------------------------------------------------------------
// Caption vocabulary
// ---------------------------------------------------------------------------

const ADJECTIVES: &[&str] = &[
    "weathered", "sunlit", "crimson", "quiet", "towering", "narrow", "ancient", "mist-covered",
    "gleaming", "rusted", "solitary", "bustling", "frost-lined", "golden", "shadowed", "painted",
];

const NOUNS: &[&str] = &[
    "fisherman", "lighthouse", "orchard", "violinist", "tram", "glacier", "falcon", "rowboat",
    "cathedral", "vineyard", "locomotive", "beekeeper", "windmill", "canyon", "ferry",
    "observatory", "footbridge", "harbor", "meadow", "fortress", "waterfall", "greenhouse",
    "carousel", "shipyard",
];

const VERBS: &[&str] = &[
    "stands", "drifts", "leans", "stretches", "glows", "waits", "rises", "curves", "rests",
    "looms", "sprawls", "turns", "floats", "climbs", "settles", "unfolds",
];

const PLACES: &[&str] = &[
    "a cobblestone square", "the northern coast", "a terraced hillside", "the old quarter",
    "a flooded valley", "the city outskirts", "a pine forest", "the river delta",
    "a mountain pass", "the desert rim", "a fishing village", "the canal district",
    "a walled garden", "the high plateau", "a limestone cliff", "the open steppe",
    "a lavender field", "the winter harbor", "a bamboo grove", "the southern plain",
];

const TIMES: &[&str] = &[
    "dawn", "dusk", "midday", "a summer storm", "the late afternoon", "a foggy morning",
    "golden hour", "a moonless night", "early spring", "the monsoon season", "first light",
    "a winter evening",
];

const MOODS: &[&str] = &[
    "painterly", "moody", "airy", "austere", "vivid", "muted", "dreamlike", "stark", "lush",
    "serene", "brooding", "luminous",
];

/// Decimal numerals that look like slot markers but must never parse as one.
const DECIMALS: &[&str] = &["1.4", "2.8", "3.14", "1.85", "4.20"];

fn pick<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> &'a str {
    pool.choose(rng).expect("vocabulary pools are non-empty")
}

/// Two distinct picks from one pool.
fn pick_two<'a>(rng: &mut ChaCha8Rng, pool: &[&'a str]) -> (&'a str, &'a str) {
    let a = pick(rng, pool);
    loop {
        let b = pick(rng, pool);
        if b != a {
            return (a, b);
        }
    }
}

// ---------------------------------------------------------------------------
// Captions
// ---------------------------------------------------------------------------

/// A random well-formed four-slot caption. Every caption mentions
/// "aesthetic" (slot 3) and "camera" (slot 4); roughly a fifth embed a
/// decimal numeral; a third carry a second subject sentence.
pub fn random_caption(rng: &mut ChaCha8Rng) -> StructuredCaption {
    let subject = {
        let (adj, noun, verb, place) =
            (pick(rng, ADJECTIVES), pick(rng, NOUNS), pick(rng, VERBS), pick(rng, PLACES));
        let mut text = match rng.random_range(0..4u8) {
            0 => format!("A {adj} {noun} {verb} near {place}."),
            1 => format!("The {adj} {noun} {verb} beyond {place}."),
            2 => format!("A {adj} {noun} {verb} against {place}."),
            _ => format!("The {adj} {noun} {verb} across {place}."),
        };
        if rng.random_range(0..10u8) < 3 {
            let (verb2, place2) = (pick(rng, VERBS), pick(rng, PLACES));
            text.push_str(&format!(" Its outline {verb2} toward {place2}."));
        }
        text
    };

    let setting = {
        let (place, time) = (pick(rng, PLACES), pick(rng, TIMES));
        match rng.random_range(0..4u8) {
            0 => format!("Set along {place} during {time}."),
            1 => format!("Located within {place} at {time}."),
            2 => format!("Framed by {place} under {time} skies."),
            _ => format!("Surrounded by {place} as {time} settles."),
        }
    };

    let aesthetics = {
        let (mood, mood2) = pick_two(rng, MOODS);
        match rng.random_range(0..4u8) {
            0 => format!("The aesthetic feels {mood} and {mood2}."),
            1 => format!("Its aesthetic leans {mood}, almost {mood2}."),
            2 => format!("A {mood} aesthetic shapes every surface."),
            _ => format!("The overall aesthetic reads as {mood}."),
        }
    };

    let camera = {
        let mut text = match rng.random_range(0..4u8) {
            0 => "The camera holds the image at a wide, low angle.".to_string(),
            1 => "A handheld camera drifts closer, flattening the perspective.".to_string(),
            2 => "The camera frames the image from overhead.".to_string(),
            _ => "A distant camera compresses the perspective of the scene.".to_string(),
        };
        if rng.random_range(0..10u8) < 2 {
            let dec = pick(rng, DECIMALS);
            text.push_str(&format!(" The focal plane sits near {dec} here."));
        }
        text
    };

    StructuredCaption::new(subject, setting, aesthetics, camera)
        .expect("template slots are non-empty and marker-free")
}

/// A rendered random caption.
pub fn random_caption_text(rng: &mut ChaCha8Rng, style: MarkerStyle) -> String {
    render(&random_caption(rng), style)
}

/// Break a rendered caption so it no longer parses cleanly: drop a marker,
/// duplicate one, truncate the tail, or prepend stray text.
pub fn corrupt_caption(text: &str, rng: &mut ChaCha8Rng) -> String {
    match rng.random_range(0..4u8) {
        0 => text.replacen("2. ", "", 1).replacen("~2~ ", "", 1),
        1 => text.replacen("3. ", "2. ", 1).replacen("~3~ ", "~2~ ", 1),
        2 => {
            let cut = text.find("3.").or_else(|| text.find("~3~")).unwrap_or(text.len() / 2);
            text[..cut].to_string()
        }
        _ => format!("stray preamble text {text}"),
    }
}

/// A caption whose subject slot loops one phrase, tripping the repeated
/// n-gram detector (and sometimes the verbatim-sentence detector too).
pub fn repetitive_caption_text(rng: &mut ChaCha8Rng, style: MarkerStyle) -> String {
    let base = random_caption(rng);
    let phrase = format!("the {} hums softly", pick(rng, NOUNS));
    let subject = if rng.random_bool(0.5) {
        // One run-on sentence of the same phrase.
        std::iter::repeat_n(phrase.as_str(), 10).collect::<Vec<_>>().join(" ")
    } else {
        // The same sentence verbatim, several times.
        let sentence = format!("The {} hums softly.", pick(rng, NOUNS));
        std::iter::repeat_n(sentence.as_str(), 4).collect::<Vec<_>>().join(" ")
    };
    let [_, setting, aesthetics, camera] = base.into_slots();
    let caption = StructuredCaption::new(subject, setting, aesthetics, camera)
        .expect("repetitive slot is still non-empty and marker-free");
    render(&caption, style)
}

/// A caption past the length ceiling without any repeated n-grams: indexed
/// tokens keep every 4-gram window unique.
pub fn overlength_caption_text(rng: &mut ChaCha8Rng, style: MarkerStyle) -> String {
    let base = random_caption(rng);
    let mut subject = String::from("An inventory unfolds.");
    for i in 0..110 {
        subject.push_str(&format!(" Entry e{i:03} marks point p{i:03}."));
    }
    let [_, setting, aesthetics, camera] = base.into_slots();
    let caption = StructuredCaption::new(subject, setting, aesthetics, camera)
        .expect("overlength slot is still non-empty and marker-free");
    render(&caption, style)
}

// ---------------------------------------------------------------------------
// Manifest records
// ---------------------------------------------------------------------------

/// Dimension cases spanning the geometry gates: exact floors, aspect
/// boundary cases, and clear failures on both sides.
fn random_dims(rng: &mut ChaCha8Rng) -> (u32, u32) {
    match rng.random_range(0..100u8) {
        0..=4 => (1023, 2048),
        5..=9 => (1024, 1600),
        10..=14 => (1024, 1536),
        15..=19 => (1024, 1024),
        20..=24 => (1200, 1024),
        25..=29 => (1025, 1027),
        30..=33 => (4096, 1024),
        34..=37 => (512, 512),
        _ => (rng.random_range(1024..=2048), rng.random_range(1024..=2048)),
    }
}

/// Scores with point masses pinned to the exact decision thresholds, so a
/// fixture always probes the strict/inclusive boundaries.
fn random_scores(rng: &mut ChaCha8Rng) -> ScoreSet {
    let aesthetic = match rng.random_range(0..100u8) {
        0..=4 => 4.73,
        _ => rng.random_range(3.0..7.0),
    };
    let luminance = match rng.random_range(0..100u8) {
        0..=3 => 12.75,
        4..=7 => 204.0,
        8..=9 => 0.0,
        10..=11 => 255.0,
        _ => rng.random_range(0.0..255.0),
    };
    let ocr = match rng.random_range(0..100u8) {
        0..=49 => 0.0,
        50..=57 => 0.1,
        58..=65 => 0.6,
        _ => rng.random_range(0.0..1.0),
    };
    ScoreSet { aesthetic: Some(aesthetic), luminance: Some(luminance), ocr: Some(ocr) }
}

fn caption_for_record(rng: &mut ChaCha8Rng) -> String {
    match rng.random_range(0..100u8) {
        0..=2 => {
            let clean = random_caption_text(rng, MarkerStyle::Numeric);
            corrupt_caption(&clean, rng)
        }
        3..=4 => repetitive_caption_text(rng, MarkerStyle::Numeric),
        5 => overlength_caption_text(rng, MarkerStyle::Numeric),
        _ => random_caption_text(rng, MarkerStyle::Numeric),
    }
}

/// `n` pending records with dimensions, captions, and a full preassigned
/// score set — enough to drive every pipeline stage without any client.
/// Dimensions and scores deliberately hit the gate boundaries, and a few
/// percent of captions are corrupted, repetitive, or overlong.
pub fn synthetic_records(n: usize, seed: u64) -> Vec<ManifestRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let mut record = base_record(i, &mut rng);
            record.scores = random_scores(&mut rng);
            record
        })
        .collect()
}

/// Like [`synthetic_records`] but without scores, for exercising the
/// score-filling stage and its clients.
pub fn synthetic_records_bare(n: usize, seed: u64) -> Vec<ManifestRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n).map(|i| base_record(i, &mut rng)).collect()
}

fn base_record(i: usize, rng: &mut ChaCha8Rng) -> ManifestRecord {
    let id = format!("img-{i:05}");
    let mut record = ManifestRecord::new(id.clone(), format!("file:///synth/{id}.png"));
    let (w, h) = random_dims(rng);
    record.width = Some(w);
    record.height = Some(h);
    record.caption_raw = Some(caption_for_record(rng));
    record
}

// ---------------------------------------------------------------------------
// Polygons and sidecars
// ---------------------------------------------------------------------------

/// A random convex quadrilateral inside a `frame`×`frame` box: four points
/// on an axis-aligned ellipse, one per angular quadrant, taken in order.
/// Points on a convex curve in cyclic order always form a convex,
/// non-self-intersecting polygon.
pub fn random_convex_quad(rng: &mut ChaCha8Rng, frame: f64) -> Vec<(f64, f64)> {
    let cx = frame * rng.random_range(0.35..0.65);
    let cy = frame * rng.random_range(0.35..0.65);
    let a = frame * rng.random_range(0.10..0.30);
    let b = frame * rng.random_range(0.10..0.30);
    (0..4)
        .map(|quadrant| {
            let degrees = f64::from(quadrant) * 90.0 + rng.random_range(10.0..80.0);
            let theta = degrees.to_radians();
            (cx + a * theta.cos(), cy + b * theta.sin())
        })
        .collect()
}

/// Aesthetic sidecar lines (`{"id", "aesthetic"}`) for every record, with a
/// small point mass exactly on the decision threshold.
pub fn aesthetic_sidecar_lines(records: &[ManifestRecord], seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xAE57);
    records
        .iter()
        .map(|r| {
            let score = if rng.random_range(0..20u8) == 0 {
                4.73
            } else {
                rng.random_range(3.0..7.0)
            };
            format!(r#"{{"id":{},"aesthetic":{}}}"#, serde_json::to_string(&r.id).unwrap(), score)
        })
        .collect()
}

/// Text-detector sidecar lines (`{"id", "polygons": …}`). About half the
/// records get an entry; each entry holds 1–3 convex quads whose confidences
/// straddle the keep cutoff.
pub fn detector_sidecar_lines(records: &[ManifestRecord], frame: f64, seed: u64) -> Vec<String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x0C12);
    records
        .iter()
        .filter_map(|r| {
            if rng.random_bool(0.5) {
                return None;
            }
            let polygons: Vec<String> = (0..rng.random_range(1..=3u8))
                .map(|_| {
                    let confidence = if rng.random_range(0..10u8) < 3 {
                        0.65
                    } else {
                        rng.random_range(0.7..1.0)
                    };
                    let points: Vec<String> = random_convex_quad(&mut rng, frame)
                        .into_iter()
                        .map(|(x, y)| format!("[{x},{y}]"))
                        .collect();
                    format!(
                        r#"{{"points":[{}],"confidence":{confidence}}}"#,
                        points.join(",")
                    )
                })
                .collect();
            Some(format!(
                r#"{{"id":{},"polygons":[{}]}}"#,
                serde_json::to_string(&r.id).unwrap(),
                polygons.join(",")
            ))
        })
        .collect()
}

// ---------------------------------------------------------------------------
// Pixels
// ---------------------------------------------------------------------------

/// A pixel backend that fabricates each record's image from its id: same
/// id, same bytes, on every platform and worker count.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticPixels {
    pub seed: u64,
}

impl SyntheticPixels {
    pub fn new(seed: u64) -> Self {
        SyntheticPixels { seed }
    }
}

impl PixelSource for SyntheticPixels {
    fn load(&self, id: &str, _uri: &str, expect: (u32, u32)) -> Result<PixelBuffer, ClientError> {
        let (width, height) = expect;
        let n = width as usize * height as usize;
        if n == 0 {
            return Err(ClientError::Protocol(format!(
                "record {id:?} requests a zero-sized image"
            )));
        }
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        hasher.update(id.as_bytes());
        let digest = hasher.finalize();
        let mut rng = ChaCha8Rng::seed_from_u64(u64::from_le_bytes(
            digest[..8].try_into().expect("digest has at least 8 bytes"),
        ));
        // A flat base tone plus per-pixel noise: images spread across the
        // luminance range instead of clustering at mid-gray. Noise comes
        // from one bulk fill — per-channel RNG calls are far too slow for
        // multi-megapixel frames.
        let base = i16::from(rng.random_range(0u8..=255));
        let mut noise = vec![0u8; n * 3];
        rng.fill_bytes(&mut noise);
        let data: Vec<[u8; 3]> = noise
            .chunks_exact(3)
            .map(|raw| {
                let channel = |b: u8| (base + i16::from(b % 49) - 24).clamp(0, 255) as u8;
                [channel(raw[0]), channel(raw[1]), channel(raw[2])]
            })
            .collect();
        PixelBuffer::new(width, height, data)
            .map_err(|e| ClientError::Protocol(format!("record {id:?}: {e}")))
    }
}

// ---------------------------------------------------------------------------
// Tests
// ---------------------------------------------------------------------------

#[cfg(test)]
mod tests {
    use super::*;
    use crate::caption::{detect_defect, parse_caption, DefectConfig};
    use crate::scoring::polygon_area;

    #[test]
    fn records_are_deterministic_per_seed() {
        assert_eq!(synthetic_records(50, 9), synthetic_records(50, 9));
        assert_ne!(synthetic_records(50, 9), synthetic_records(50, 10));
    }

    #[test]
    fn records_have_unique_ids_and_validate() {
        let records = synthetic_records(200, 3);
        let mut ids: Vec<&str> = records.iter().map(|r| r.id.as_str()).collect();
        ids.sort_unstable();
        ids.dedup();
        assert_eq!(ids.len(), 200);
        for record in &records {
            assert!(record.validate().is_ok(), "record {} invalid", record.id);
            assert!(record.scores.is_complete());
            assert!(record.outcome.is_pending());
        }
    }

    #[test]
    fn bare_records_carry_no_scores() {
        let records = synthetic_records_bare(20, 5);
        assert!(records.iter().all(|r| r.scores.is_empty()));
        assert!(records.iter().all(|r| r.caption_raw.is_some()));
    }

    #[test]
    fn clean_captions_parse_and_pass_defect_checks() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let cfg = DefectConfig::default();
        for _ in 0..300 {
            let text = random_caption_text(&mut rng, MarkerStyle::Numeric);
            let (caption, style) = parse_caption(&text).expect("clean caption must parse");
            assert_eq!(style, MarkerStyle::Numeric);
            assert!(detect_defect(&text, &cfg).well_formed(), "false defect: {text}");
            assert!(caption.aesthetics().contains("aesthetic"));
            assert!(caption.camera().contains("camera"));
        }
    }

    #[test]
    fn some_captions_contain_decimal_numerals() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let texts: Vec<String> =
            (0..100).map(|_| random_caption_text(&mut rng, MarkerStyle::Numeric)).collect();
        assert!(
            texts.iter().any(|t| DECIMALS.iter().any(|d| t.contains(d))),
            "decimal numerals should appear in a sample of 100 captions"
        );
    }

    #[test]
    fn corrupt_captions_fail_parsing() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..100 {
            let clean = random_caption_text(&mut rng, MarkerStyle::Numeric);
            let broken = corrupt_caption(&clean, &mut rng);
            assert!(parse_caption(&broken).is_err(), "should not parse: {broken}");
        }
    }

    #[test]
    fn defect_generators_trip_their_detectors() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let cfg = DefectConfig::default();
        for _ in 0..50 {
            let repetitive = repetitive_caption_text(&mut rng, MarkerStyle::Numeric);
            parse_caption(&repetitive).expect("repetitive caption still parses");
            assert!(!detect_defect(&repetitive, &cfg).well_formed());
        }
        let long = overlength_caption_text(&mut rng, MarkerStyle::Numeric);
        parse_caption(&long).expect("overlong caption still parses");
        let report = detect_defect(&long, &cfg);
        assert!(!report.well_formed());
        assert!(long.chars().count() > cfg.max_chars);
    }

    #[test]
    fn quads_are_convex_inside_the_frame_with_positive_area() {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        for _ in 0..200 {
            let quad = random_convex_quad(&mut rng, 736.0);
            assert_eq!(quad.len(), 4);
            for &(x, y) in &quad {
                assert!((0.0..=736.0).contains(&x) && (0.0..=736.0).contains(&y));
            }
            // Convexity: all cross products share a sign.
            let crosses: Vec<f64> = (0..4)
                .map(|i| {
                    let (ax, ay) = quad[i];
                    let (bx, by) = quad[(i + 1) % 4];
                    let (cx, cy) = quad[(i + 2) % 4];
                    (bx - ax) * (cy - by) - (by - ay) * (cx - bx)
                })
                .collect();
            assert!(
                crosses.iter().all(|&c| c > 0.0) || crosses.iter().all(|&c| c < 0.0),
                "not convex: {quad:?}"
            );
            assert!(polygon_area(&quad).unwrap() > 0.0);
        }
    }

    #[test]
    fn sidecar_lines_are_valid_jsonl() {
        let records = synthetic_records_bare(40, 2);
        let aesthetic = aesthetic_sidecar_lines(&records, 2);
        assert_eq!(aesthetic.len(), records.len());
        let parsed = crate::scoring::SidecarAesthetics::from_reader(
            aesthetic.join("\n").as_bytes(),
            "synth",
        )
        .unwrap();
        assert_eq!(parsed.len(), records.len());

        let detector = detector_sidecar_lines(&records, 736.0, 2);
        assert!(!detector.is_empty() && detector.len() < records.len());
        let parsed = crate::scoring::DetectorSidecar::from_reader(
            detector.join("\n").as_bytes(),
            "synth",
        )
        .unwrap();
        assert_eq!(parsed.len(), detector.len());
    }

    #[test]
    fn pixels_are_deterministic_and_sized() {
        let source = SyntheticPixels::new(7);
        let a = source.load("img-00001", "file:///x", (64, 32)).unwrap();
        let b = source.load("img-00001", "file:///x", (64, 32)).unwrap();
        assert_eq!(a.pixels(), b.pixels());
        assert_eq!(a.pixels().len(), 64 * 32);
        let other = source.load("img-00002", "file:///x", (64, 32)).unwrap();
        assert_ne!(a.pixels(), other.pixels());
    }

    #[test]
    fn corpus_statistics_surface_template_tokens() {
        use crate::analytics::word_frequency;
        use crate::stopwords::default_stopwords;
        let mut rng = ChaCha8Rng::seed_from_u64(123);
        let texts: Vec<String> =
            (0..500).map(|_| random_caption_text(&mut rng, MarkerStyle::Numeric)).collect();
        let freq =
            word_frequency(texts.iter().map(String::as_str), default_stopwords());
        let top: Vec<&str> = freq.top(10).into_iter().map(|(t, _)| t).collect();
        assert!(top.contains(&"camera"), "top-10 was {top:?}");
        assert!(top.contains(&"aesthetic"), "top-10 was {top:?}");
    }
}
