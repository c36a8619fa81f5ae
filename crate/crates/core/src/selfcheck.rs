//! Invariant suites on synthetic data, run by `vidtok selfcheck`.
//!
//! Each suite counts individual checks; a run passes when every check does.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::curation::{
    compose_ocr_caption, filter_aspect_ratio, filter_by_score, parse_ocr_caption, CurationSample,
    TableScorer, TextBox,
};
use crate::diff_fp::{compression_stats, compute_prune_mask, FrameSequence, PruneConfig};
use crate::format::{self, RenderItem, SequenceFormat};
use crate::geometry::{ImageBuffer, PatchGrid, Resolution, TokenBudget};
use crate::rope2d::{PositionIndex, Rope2d, RopeConfig};
use crate::video::{
    downsample_tokens, sample_timestamps, EncoderPlug, SamplingPolicy, VideoTokenizer,
};
use crate::Error;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SuiteResult {
    pub name: &'static str,
    pub passed: usize,
    pub total: usize,
}

impl SuiteResult {
    pub fn ok(&self) -> bool {
        self.passed == self.total
    }
}

#[derive(Default)]
struct Tally {
    passed: usize,
    total: usize,
}

impl Tally {
    fn check(&mut self, cond: bool) {
        self.total += 1;
        if cond {
            self.passed += 1;
        }
    }

    fn finish(self, name: &'static str) -> SuiteResult {
        SuiteResult {
            name,
            passed: self.passed,
            total: self.total,
        }
    }
}

/// Run all suites with a fixed seed.
pub fn run_selfcheck(seed: u64) -> Vec<SuiteResult> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    vec![
        static_video(&mut rng),
        mask_oracle(&mut rng),
        threshold_monotonicity(&mut rng),
        rope_invariants(&mut rng),
        downsampling(&mut rng),
        budget_safety(&mut rng),
        sampling_policy(),
        sequence_roundtrip(&mut rng),
        interval_roundtrip(&mut rng),
        curation_partitions(&mut rng),
        ocr_caption_roundtrip(&mut rng),
    ]
}

/// Frames of `regions × regions` blocks of `region` px with values on a
/// 1/8 lattice.
fn quantized_frames(
    rng: &mut ChaCha8Rng,
    frames: usize,
    regions: usize,
    region: usize,
) -> FrameSequence {
    let size = regions * region;
    let imgs = (0..frames)
        .map(|_| {
            ImageBuffer::from_fn(size, size, 1, |_, _, _| rng.gen_range(0..=8) as f64 / 8.0)
                .expect("valid synthetic frame")
        })
        .collect();
    FrameSequence::evenly_spaced(imgs, 1.0).expect("valid synthetic sequence")
}

fn static_video(rng: &mut ChaCha8Rng) -> SuiteResult {
    let mut t = Tally::default();
    for frames in [2usize, 5, 180] {
        let img = ImageBuffer::from_fn(28, 28, 3, |_, _, _| rng.gen::<f64>()).expect("frame");
        let seq = FrameSequence::evenly_spaced(vec![img; frames], 1.0).expect("seq");
        let cfg = PruneConfig::new(0.1, 14).expect("cfg");
        let stats = compression_stats(&compute_prune_mask(&seq, &cfg).expect("mask"));
        t.check(stats.ratio == (frames - 1) as f64 / frames as f64);
    }
    t.finish("static-video")
}

fn mask_oracle(rng: &mut ChaCha8Rng) -> SuiteResult {
    let mut t = Tally::default();
    for _ in 0..200 {
        let seq = quantized_frames(rng, 3, 4, 2);
        let threshold = rng.gen_range(0..=8) as f64 / 16.0;
        let mask =
            compute_prune_mask(&seq, &PruneConfig::new(threshold, 2).expect("cfg")).expect("mask");
        let mut agree = true;
        for f in 0..3 {
            for r in 0..4 {
                for c in 0..4 {
                    let expected = if f == 0 {
                        true
                    } else {
                        let mut diff = 0.0;
                        for y in 0..2 {
                            for x in 0..2 {
                                let a = seq.frames()[f].get(r * 2 + y, c * 2 + x, 0);
                                let b = seq.frames()[f - 1].get(r * 2 + y, c * 2 + x, 0);
                                diff += (a - b).abs();
                            }
                        }
                        diff / 4.0 >= threshold
                    };
                    agree &= mask.is_kept(f, r, c) == expected;
                }
            }
        }
        t.check(agree);
    }
    t.finish("mask-oracle")
}

fn threshold_monotonicity(rng: &mut ChaCha8Rng) -> SuiteResult {
    let mut t = Tally::default();
    for _ in 0..100 {
        let seq = quantized_frames(rng, 3, 4, 2);
        let lo = rng.gen_range(0.0..0.5);
        let hi = lo + rng.gen_range(0.0..0.5);
        let a = compute_prune_mask(&seq, &PruneConfig::new(lo, 2).expect("cfg")).expect("mask");
        let b = compute_prune_mask(&seq, &PruneConfig::new(hi, 2).expect("cfg")).expect("mask");
        // dropped at lo implies dropped at hi
        t.check(
            a.as_slice()
                .iter()
                .zip(b.as_slice())
                .all(|(ka, kb)| *ka || !*kb),
        );
    }
    t.finish("threshold-monotonicity")
}

fn rope_invariants(rng: &mut ChaCha8Rng) -> SuiteResult {
    let mut t = Tally::default();
    let rope = Rope2d::new(RopeConfig::with_head_dim(16).expect("cfg"));
    let vec = |rng: &mut ChaCha8Rng| {
        (0..16)
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect::<Vec<f64>>()
    };
    let pos = |rng: &mut ChaCha8Rng| PositionIndex::new(rng.gen_range(0..64), rng.gen_range(0..64));
    for _ in 0..200 {
        let v = vec(rng);
        let p = pos(rng);
        let out = rope.rotate(&v, p).expect("rotate");
        let n0 = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        let n1 = out.iter().map(|x| x * x).sum::<f64>().sqrt();
        t.check((n1 - n0).abs() <= 1e-9 * n0);

        let (u, w, q) = (vec(rng), vec(rng), pos(rng));
        let d = PositionIndex::new(rng.gen_range(0..64), rng.gen_range(0..64));
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let base = dot(
            &rope.rotate(&u, p).expect("rotate"),
            &rope.rotate(&w, q).expect("rotate"),
        );
        let shifted = dot(
            &rope
                .rotate(&u, PositionIndex::new(p.row + d.row, p.col + d.col))
                .expect("rotate"),
            &rope
                .rotate(&w, PositionIndex::new(q.row + d.row, q.col + d.col))
                .expect("rotate"),
        );
        t.check((base - shifted).abs() <= 1e-6);
    }
    t.finish("rope")
}

fn downsampling(rng: &mut ChaCha8Rng) -> SuiteResult {
    let mut t = Tally::default();
    for _ in 0..50 {
        let v: Vec<f64> = (0..4).map(|_| rng.gen_range(-10.0..10.0)).collect();
        let grid = PatchGrid::from_features(4, 6, 4, v.repeat(24)).expect("grid");
        let out = downsample_tokens(&grid, 2).expect("downsample");
        t.check(out.iter_cells().all(|c| c == v.as_slice()));

        let (a, b, c) = (
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
            rng.gen_range(-5.0..5.0),
        );
        let ramp = |r: f64, col: f64| a * r + b * col + c;
        let cells = (0..16)
            .map(|i| ramp((i / 4) as f64, (i % 4) as f64))
            .collect();
        let grid = PatchGrid::from_features(4, 4, 1, cells).expect("grid");
        let out = downsample_tokens(&grid, 2).expect("downsample");
        let ok = (0..2).all(|r| {
            (0..2).all(|col| {
                let mean = ramp(2.0 * r as f64 + 0.5, 2.0 * col as f64 + 0.5);
                (out.cell(r, col)[0] - mean).abs() <= 1e-12
            })
        });
        t.check(ok);
    }
    t.finish("downsample")
}

fn budget_safety(rng: &mut ChaCha8Rng) -> SuiteResult {
    let mut t = Tally::default();
    for _ in 0..100 {
        let frames = rng.gen_range(1..8);
        let regions = rng.gen_range(1..5);
        let seq = quantized_frames(rng, frames, regions, 2);
        let max_vision = rng.gen_range(1..40);
        let max_total = max_vision + rng.gen_range(0..10);
        let budget = TokenBudget::new(max_total, max_vision).expect("budget");
        let mut tok = VideoTokenizer::new(EncoderPlug::identity());
        tok.patch_size = 1;
        tok.merge = 2;
        tok.threshold = 0.2;
        tok.budget = budget;
        match tok.tokenize(&seq) {
            Ok(out) => t.check(
                out.sequence.vision_count() <= max_vision
                    && out.sequence.total_count() <= max_total,
            ),
            Err(Error::UnsatisfiableBudget {
                frame_tokens,
                available,
            }) => t.check(frame_tokens > available && frame_tokens == regions * regions),
            Err(_) => t.check(false),
        }
    }
    t.finish("budget")
}

fn sampling_policy() -> SuiteResult {
    let mut t = Tally::default();
    let p = SamplingPolicy::default();
    let long = sample_timestamps(200.0, &p).expect("timestamps");
    t.check(long.len() == 180);
    t.check(long.windows(2).all(|w| w[0] < w[1]));
    t.check(long.iter().all(|x| x.fract() == 0.0 && *x < 200.0));
    t.check(sample_timestamps(5.0, &p).expect("timestamps") == vec![0.0, 1.0, 2.0, 3.0, 4.0]);
    t.finish("sampling")
}

const WORDS: &[&str] = &["a cat", "What now?", "Describe.", "x\ny", "the end", "ok"];

fn random_items(rng: &mut ChaCha8Rng, fmt: SequenceFormat) -> Vec<RenderItem> {
    let word = |rng: &mut ChaCha8Rng| WORDS[rng.gen_range(0..WORDS.len())].to_string();
    match fmt {
        SequenceFormat::Image => {
            let mut items = Vec::new();
            let mut last_text = false;
            for _ in 0..rng.gen_range(1..6) {
                if !last_text && rng.gen_bool(0.3) {
                    items.push(RenderItem::text(word(rng)));
                    last_text = true;
                } else {
                    items.push(RenderItem::image(rng.gen_range(1..500)));
                    last_text = false;
                }
            }
            items
        }
        SequenceFormat::Video => {
            let mut tenths = 0u64;
            let mut items: Vec<_> = (0..rng.gen_range(1..6))
                .map(|_| {
                    tenths += rng.gen_range(1..30);
                    RenderItem::frame(rng.gen_range(1..500), tenths as f64 / 10.0)
                })
                .collect();
            if rng.gen_bool(0.5) {
                items.push(RenderItem::text(word(rng)));
            }
            items
        }
        SequenceFormat::Streaming => {
            let mut tenths = 0u64;
            let mut items = Vec::new();
            for _ in 0..rng.gen_range(0..8) {
                let prev_is_frame = matches!(items.last(), Some(RenderItem::Frame { .. }) | None);
                match rng.gen_range(0..3) {
                    0 => {
                        tenths += rng.gen_range(0..20);
                        items.push(RenderItem::frame(
                            rng.gen_range(1..100),
                            tenths as f64 / 10.0,
                        ));
                    }
                    1 if prev_is_frame => items.push(RenderItem::text(word(rng))),
                    _ => items.push(RenderItem::answer(word(rng))),
                }
            }
            items
        }
    }
}

fn sequence_roundtrip(rng: &mut ChaCha8Rng) -> SuiteResult {
    let mut t = Tally::default();
    for i in 0..300 {
        let fmt = [
            SequenceFormat::Image,
            SequenceFormat::Video,
            SequenceFormat::Streaming,
        ][i % 3];
        let items = random_items(rng, fmt);
        let ok = format::render(fmt, &items)
            .and_then(|r| format::parse(fmt, &r.text))
            .map(|back| back == items)
            .unwrap_or(false);
        t.check(ok);
    }
    t.finish("sequence-format")
}

fn interval_roundtrip(rng: &mut ChaCha8Rng) -> SuiteResult {
    let mut t = Tally::default();
    t.check(format::format_time_interval(1.0, 2.0).ok().as_deref() == Some("1.0-2.0 s"));
    for _ in 0..200 {
        let a = rng.gen_range(0.0..500.0);
        let b = a + rng.gen_range(0.0..100.0);
        let ok = format::format_time_interval(a, b)
            .and_then(|s| format::parse_time_interval(&s))
            .map(|(x, y)| (x - a).abs() <= 0.05 && (y - b).abs() <= 0.05)
            .unwrap_or(false);
        t.check(ok);
    }
    t.finish("time-interval")
}

fn curation_partitions(rng: &mut ChaCha8Rng) -> SuiteResult {
    let mut t = Tally::default();
    for _ in 0..50 {
        let n = rng.gen_range(0..30);
        let batch: Vec<CurationSample> = (0..n)
            .map(|i| {
                let res =
                    Resolution::new(rng.gen_range(1..2000), rng.gen_range(1..2000)).expect("res");
                CurationSample::new(format!("s{i:03}"), res)
            })
            .collect();
        let mut ids: Vec<String> = batch.iter().map(|s| s.id.clone()).collect();
        let part = filter_aspect_ratio(batch.clone(), 1.0 / 3.0, 3.0).expect("aspect");
        let mut got: Vec<String> = part
            .kept
            .iter()
            .chain(&part.removed)
            .map(|s| s.id.clone())
            .collect();
        got.sort();
        ids.sort();
        t.check(got == ids && part.kept.len() + part.removed.len() == n);

        let table = TableScorer(
            batch
                .iter()
                .map(|s| (s.id.clone(), rng.gen::<f64>()))
                .collect(),
        );
        let part = filter_by_score(batch, &table, "aesthetic", 0.5);
        let mut got: Vec<String> = part
            .kept
            .iter()
            .chain(&part.removed)
            .map(|s| s.id.clone())
            .collect();
        got.sort();
        t.check(got == ids && part.kept.iter().all(|s| s.scores["aesthetic"] >= 0.5));
    }
    t.finish("curation")
}

fn ocr_caption_roundtrip(rng: &mut ChaCha8Rng) -> SuiteResult {
    let mut t = Tally::default();
    for _ in 0..100 {
        let boxes: Vec<TextBox> = (0..rng.gen_range(0..6))
            .map(|i| {
                let x1: f64 = rng.gen_range(0.0..0.5);
                let y1: f64 = rng.gen_range(0.0..0.5);
                let bbox = [
                    x1,
                    y1,
                    x1 + rng.gen_range(0.0..0.5),
                    y1 + rng.gen_range(0.0..0.5),
                ];
                TextBox::new(format!("T{i}"), bbox).expect("box")
            })
            .collect();
        let ok = compose_ocr_caption("A street", &boxes)
            .and_then(|s| parse_ocr_caption(&s))
            .map(|(cap, back)| {
                cap == "A street"
                    && back.len() == boxes.len()
                    && back.iter().zip(&boxes).all(|(a, b)| {
                        a.text() == b.text()
                            && a.bbox()
                                .iter()
                                .zip(b.bbox())
                                .all(|(x, y)| (x - y).abs() <= 5e-4)
                    })
            })
            .unwrap_or(false);
        t.check(ok);
    }
    t.finish("ocr-caption")
}
