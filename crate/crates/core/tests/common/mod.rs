//! Shared helpers: fixture loading, random inputs, and brute-force oracles.
#![allow(dead_code)]

use rand::Rng;
use vidtok::diff_fp::FrameSequence;
use vidtok::format::{RenderItem, SequenceFormat};
use vidtok::geometry::ImageBuffer;

pub struct GoldenCase {
    pub name: String,
    pub format: SequenceFormat,
    pub items: Vec<RenderItem>,
    pub expected: String,
}

pub fn golden_cases() -> Vec<GoldenCase> {
    let src = include_str!("../fixtures/sequences.golden");
    src.lines()
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(|line| {
            let f: Vec<&str> = line.split('\t').collect();
            assert_eq!(f.len(), 4, "bad fixture line {line:?}");
            GoldenCase {
                name: f[0].to_string(),
                format: f[1].parse().expect("format"),
                items: serde_json::from_str(f[2]).expect("items"),
                expected: serde_json::from_str(f[3]).expect("expected"),
            }
        })
        .collect()
}

/// A sequence of `frames` frames, each `regions × regions` regions of
/// `region` pixels.
///
/// With `lattice` set, one channel and values on multiples of 1/8, so
/// distances hit the threshold exactly now and then.
pub fn random_frames(
    rng: &mut impl Rng,
    frames: usize,
    regions: usize,
    region: usize,
    lattice: bool,
) -> FrameSequence {
    let size = regions * region;
    let channels = if lattice { 1 } else { 3 };
    let mut prev: Option<ImageBuffer> = None;
    let imgs = (0..frames)
        .map(|_| {
            // Mostly repeat the previous frame so that both outcomes occur.
            let img = ImageBuffer::from_fn(size, size, channels, |y, x, c| {
                let keep_old = rng.gen_bool(0.5);
                match (&prev, keep_old) {
                    (Some(p), true) => p.get(y, x, c),
                    _ if lattice => rng.gen_range(0..=8) as f64 / 8.0,
                    _ => rng.gen::<f64>(),
                }
            })
            .unwrap();
            prev = Some(img.clone());
            img
        })
        .collect();
    FrameSequence::evenly_spaced(imgs, 1.0).unwrap()
}

/// Brute-force keep mask, indexed `[frame][row][col]`.
pub fn oracle_mask(seq: &FrameSequence, region: usize, threshold: f64) -> Vec<Vec<Vec<bool>>> {
    let frames = seq.frames();
    let rows = frames[0].height() / region;
    let cols = frames[0].width() / region;
    let ch = frames[0].channels();
    let mut out = Vec::new();
    for t in 0..frames.len() {
        let mut grid = vec![vec![true; cols]; rows];
        if t > 0 {
            for (r, row) in grid.iter_mut().enumerate() {
                for (c, cell) in row.iter_mut().enumerate() {
                    let mut sum = 0.0;
                    for y in r * region..(r + 1) * region {
                        for x in c * region..(c + 1) * region {
                            for k in 0..ch {
                                sum += (frames[t].get(y, x, k) - frames[t - 1].get(y, x, k)).abs();
                            }
                        }
                    }
                    let mean = sum / (region * region * ch) as f64;
                    *cell = mean >= threshold;
                }
            }
        }
        out.push(grid);
    }
    out
}

const WORDS: &[&str] = &[
    "cat", "What", "is", "this?", "A", "red", "cup.", "left,", "right", "Time", "GPT",
];

fn random_text(rng: &mut impl Rng) -> String {
    let n = rng.gen_range(1..6);
    let mut s = (0..n)
        .map(|_| WORDS[rng.gen_range(0..WORDS.len())])
        .collect::<Vec<_>>()
        .join(" ");
    if rng.gen_bool(0.2) {
        s.push_str("\nsecond line");
    }
    s
}

/// Random well-formed event list for `format`.
pub fn random_items(rng: &mut impl Rng, format: SequenceFormat) -> Vec<RenderItem> {
    let count = |rng: &mut dyn rand::RngCore| rng.gen_range(1..2000usize);
    match format {
        SequenceFormat::Image => {
            let mut items = vec![];
            for i in 0..rng.gen_range(1..7) {
                let after_text = matches!(items.last(), Some(RenderItem::Text { .. }));
                if i > 0 && !after_text && rng.gen_bool(0.4) {
                    items.push(RenderItem::text(random_text(rng)));
                } else {
                    items.push(RenderItem::image(count(rng)));
                }
            }
            items
        }
        SequenceFormat::Video => {
            let mut t = rng.gen_range(0..5u32);
            let mut items = vec![];
            for _ in 0..rng.gen_range(1..10) {
                items.push(RenderItem::frame(count(rng), t as f64 / 2.0));
                t += rng.gen_range(1..6);
            }
            if rng.gen_bool(0.6) {
                items.push(RenderItem::text(random_text(rng)));
            }
            items
        }
        SequenceFormat::Streaming => {
            let mut t = 0u32;
            let mut items: Vec<RenderItem> = vec![];
            for _ in 0..rng.gen_range(0..12) {
                let last_frame = matches!(items.last(), None | Some(RenderItem::Frame { .. }));
                match rng.gen_range(0..4) {
                    0 | 1 => {
                        t += rng.gen_range(0..4);
                        items.push(RenderItem::frame(count(rng), t as f64 / 2.0));
                    }
                    2 if last_frame => items.push(RenderItem::text(random_text(rng))),
                    _ => items.push(RenderItem::answer(random_text(rng))),
                }
            }
            items
        }
    }
}
