//! Acceptance criteria, one line per criterion.
//!
//! Runs without the libtest harness so the report is always printed:
//! `cargo test --test acceptance`.

mod common;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use vidtok::curation::{
    cluster_select, compose_ocr_caption, generate_ocr_instruction, parse_ocr_caption,
    CurationPipeline, CurationSample, OcrTask, Stage, StoredScorer, TextBox,
};
use vidtok::diff_fp::{
    compression_stats, compute_prune_mask, FrameSequence, PruneConfig, VisionToken,
};
use vidtok::format::{self, SequenceFormat};
use vidtok::geometry::{ImageBuffer, PatchGrid, Resolution, TokenBudget};
use vidtok::rope2d::{PositionIndex, Rope2d, RopeConfig};
use vidtok::video::{
    downsample_tokens, enforce_budget, prepare_frames, sample_timestamps, select_frames_for_budget,
    EncoderPlug, SamplingPolicy, SequenceElement, TokenSequence, VideoTokenizer,
};
use vidtok::Error;

type Outcome = Result<String, String>;
type Criterion = (&'static str, fn() -> Outcome);

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn static_video_law() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let cfg = PruneConfig::new(0.1, 28).map_err(|e| e.to_string())?;
    for t in [2usize, 5, 180] {
        let frame = ImageBuffer::from_fn(56, 84, 3, |_, _, _| rng.gen::<f64>()).unwrap();
        let seq = FrameSequence::evenly_spaced(vec![frame; t], 1.0).unwrap();
        let s = compression_stats(&compute_prune_mask(&seq, &cfg).unwrap());
        let want = (t - 1) as f64 / t as f64;
        ensure(s.ratio == want, || {
            format!("T={t}: ratio {} != {want}", s.ratio)
        })?;
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 5.0, || format!("took {secs:.2}s"))?;
    Ok(format!("T in {{2,5,180}} exact, {secs:.2}s"))
}

fn mask_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let runs = 1000;
    for i in 0..runs {
        let lattice = i % 2 == 0;
        let seq = common::random_frames(&mut rng, 3, 4, 2, lattice);
        let threshold = if lattice {
            rng.gen_range(0..=8) as f64 / 16.0
        } else {
            rng.gen_range(0.0..0.5)
        };
        let mask = compute_prune_mask(&seq, &PruneConfig::new(threshold, 2).unwrap()).unwrap();
        let oracle = common::oracle_mask(&seq, 2, threshold);
        for (t, grid) in oracle.iter().enumerate() {
            for (r, row) in grid.iter().enumerate() {
                for (c, &keep) in row.iter().enumerate() {
                    ensure(mask.is_kept(t, r, c) == keep, || {
                        format!("run {i}: frame {t} region ({r},{c}) disagrees")
                    })?;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    ensure(secs < 30.0, || format!("took {secs:.2}s"))?;
    Ok(format!("{runs} sequences agree, {secs:.2}s"))
}

fn threshold_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut violations = 0;
    for i in 0..200 {
        let seq = common::random_frames(&mut rng, 4, 4, 2, i % 2 == 0);
        let mut ts: Vec<f64> = (0..6).map(|_| rng.gen_range(0.0..0.6)).collect();
        ts.sort_by(f64::total_cmp);
        let masks: Vec<_> = ts
            .iter()
            .map(|&t| compute_prune_mask(&seq, &PruneConfig::new(t, 2).unwrap()).unwrap())
            .collect();
        for a in 0..masks.len() {
            for b in a..masks.len() {
                let lo = masks[a].as_slice();
                let hi = masks[b].as_slice();
                violations += lo.iter().zip(hi).filter(|(kl, kh)| !**kl && **kh).count();
            }
        }
    }
    ensure(violations == 0, || format!("{violations} violations"))?;
    Ok("200 sequences, 0 violations".into())
}

fn rope_isometry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut worst_norm: f64 = 0.0;
    let mut worst_dot: f64 = 0.0;
    for i in 0..1000 {
        let dim = [4, 8, 16, 64][i % 4];
        let rope = Rope2d::new(RopeConfig::with_head_dim(dim).unwrap());
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let w: Vec<f64> = (0..dim).map(|_| rng.gen_range(-2.0..2.0)).collect();
        let p = PositionIndex::new(rng.gen_range(0..200), rng.gen_range(0..200));
        let q = PositionIndex::new(rng.gen_range(0..200), rng.gen_range(0..200));
        let (dr, dc) = (rng.gen_range(0..200), rng.gen_range(0..200));

        let rv = rope.rotate(&v, p).unwrap();
        let norm = |x: &[f64]| x.iter().map(|a| a * a).sum::<f64>().sqrt();
        worst_norm = worst_norm.max((norm(&rv) - norm(&v)).abs() / norm(&v));

        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
        let base = dot(&rv, &rope.rotate(&w, q).unwrap());
        let moved = dot(
            &rope
                .rotate(&v, PositionIndex::new(p.row + dr, p.col + dc))
                .unwrap(),
            &rope
                .rotate(&w, PositionIndex::new(q.row + dr, q.col + dc))
                .unwrap(),
        );
        worst_dot = worst_dot.max((base - moved).abs());
    }
    ensure(worst_norm <= 1e-9, || format!("norm drift {worst_norm:e}"))?;
    ensure(worst_dot <= 1e-6, || {
        format!("inner product drift {worst_dot:e}")
    })?;
    Ok(format!(
        "max norm drift {worst_norm:.1e}, max dot drift {worst_dot:.1e}"
    ))
}

fn downsampling_contract() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut worst: f64 = 0.0;
    for _ in 0..200 {
        let (rows, cols, dim) = (
            2 * rng.gen_range(1..5),
            2 * rng.gen_range(1..5),
            rng.gen_range(1..6),
        );
        let v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-100.0..100.0)).collect();
        let grid = PatchGrid::from_features(rows, cols, dim, v.repeat(rows * cols)).unwrap();
        let out = downsample_tokens(&grid, 2).unwrap();
        ensure(out.iter_cells().all(|c| c == v.as_slice()), || {
            "constant grid changed".into()
        })?;

        let (a, b, c) = (
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
            rng.gen_range(-3.0..3.0),
        );
        let ramp: Vec<f64> = (0..16)
            .map(|i| a * (i / 4) as f64 + b * (i % 4) as f64 + c)
            .collect();
        let out = downsample_tokens(&PatchGrid::from_features(4, 4, 1, ramp.clone()).unwrap(), 2)
            .unwrap();
        for r in 0..2 {
            for s in 0..2 {
                let block = [
                    (2 * r, 2 * s),
                    (2 * r, 2 * s + 1),
                    (2 * r + 1, 2 * s),
                    (2 * r + 1, 2 * s + 1),
                ];
                let mean = block.iter().map(|&(y, x)| ramp[y * 4 + x]).sum::<f64>() / 4.0;
                worst = worst.max((out.cell(r, s)[0] - mean).abs());
            }
        }
    }
    ensure(worst <= 1e-12, || format!("ramp error {worst:e}"))?;
    Ok(format!("constants exact, ramp error {worst:.1e}"))
}

fn budget_safety() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut ok, mut unsat) = (0, 0);
    for i in 0..500 {
        let max_vision = rng.gen_range(1..200);
        let max_total = max_vision + rng.gen_range(0..50);
        let budget = TokenBudget::new(max_total, max_vision).unwrap();
        let policy = SamplingPolicy::new(1.0, rng.gen_range(1..20)).unwrap();

        if i % 2 == 0 {
            // Full pipeline on random clips; frames are resized with a per-frame
            // cap that may exceed the budget.
            let frames = rng.gen_range(1..12);
            let (h, w) = (rng.gen_range(8..80), rng.gen_range(8..80));
            let imgs: Vec<ImageBuffer> = (0..frames)
                .map(|_| {
                    ImageBuffer::from_fn(h, w, 1, |_, _, _| rng.gen_range(0..4) as f64 / 3.0)
                        .unwrap()
                })
                .collect();
            let times = (0..frames).map(|t| t as f64).collect();
            let seq = prepare_frames(imgs, times, 2, 2, rng.gen_range(1..400)).unwrap();
            let mut tok = VideoTokenizer::new(EncoderPlug::identity());
            tok.patch_size = 2;
            tok.threshold = rng.gen_range(0.0..0.5);
            tok.budget = budget;
            tok.policy = policy;
            match tok.tokenize(&seq) {
                Ok(out) => {
                    let s = &out.sequence;
                    ensure(
                        s.vision_count() <= max_vision && s.total_count() <= max_total,
                        || {
                            format!(
                                "run {i}: {} vision / {} total over budget",
                                s.vision_count(),
                                s.total_count()
                            )
                        },
                    )?;
                    ok += 1;
                }
                Err(Error::UnsatisfiableBudget {
                    frame_tokens,
                    available,
                }) => {
                    ensure(frame_tokens > available, || {
                        format!("run {i}: spurious unsatisfiable")
                    })?;
                    unsat += 1;
                }
                Err(e) => return Err(format!("run {i}: {e}")),
            }
        } else {
            // Synthetic sequences with text tokens through enforce_budget.
            let mut elements = Vec::new();
            let frames = rng.gen_range(1..30);
            for f in 0..frames {
                for k in 0..rng.gen_range(1..40) {
                    elements.push(SequenceElement::Vision(VisionToken {
                        frame: f,
                        position: PositionIndex::new(0, k),
                        timestamp: f as f64,
                        feature: vec![],
                    }));
                }
                if rng.gen_bool(0.2) {
                    elements.push(SequenceElement::Text("t".into()));
                }
            }
            let seq = TokenSequence::new(elements);
            let text = seq.text_count();
            match enforce_budget(seq, &budget, &policy) {
                Ok(s) => {
                    ensure(
                        s.vision_count() <= max_vision && s.total_count() <= max_total,
                        || {
                            format!(
                                "run {i}: {} vision / {} total over budget",
                                s.vision_count(),
                                s.total_count()
                            )
                        },
                    )?;
                    ensure(s.text_count() == text, || {
                        format!("run {i}: text tokens dropped")
                    })?;
                    ok += 1;
                }
                Err(Error::UnsatisfiableBudget { .. } | Error::BudgetExceeded { .. }) => unsat += 1,
                Err(e) => return Err(format!("run {i}: {e}")),
            }
        }
    }

    // Default budget: 20 frames of 1000 tokens keep 10 frames.
    let picked = select_frames_for_budget(
        &[1000; 20],
        0,
        &TokenBudget::default(),
        &SamplingPolicy::default(),
    )
    .map_err(|e| e.to_string())?;
    ensure(picked.as_ref().map(Vec::len) == Some(10), || {
        format!("20x1000 kept {picked:?}")
    })?;
    let single = select_frames_for_budget(
        &[20000],
        0,
        &TokenBudget::default(),
        &SamplingPolicy::default(),
    );
    ensure(
        matches!(
            single,
            Err(Error::UnsatisfiableBudget {
                frame_tokens: 20000,
                available: 10240
            })
        ),
        || format!("20000-token frame gave {single:?}"),
    )?;

    // The CLI maps the unsatisfiable case to exit code 2.
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let frame = ImageBuffer::from_fn(112, 112, 1, |y, x, _| ((y + x) % 2) as f64).unwrap();
    vidtok::io::write_frame_dir(dir.path(), &[frame], &[0.0], 1.0, 1.0, "png")
        .map_err(|e| e.to_string())?;
    let (mut out, mut err) = (Vec::new(), Vec::new());
    let frames = dir.path().to_str().unwrap();
    let argv = [
        "vidtok",
        "tokenize",
        "--frames",
        frames,
        "--budget-vision",
        "8",
        "--max-frame-tokens",
        "10240",
    ];
    let code = vidtok::cli::run(argv, &mut out, &mut err);
    let msg = String::from_utf8_lossy(&err);
    ensure(
        code == 2 && msg.contains("16 tokens") && msg.contains("only 8"),
        || format!("cli exit {code}: {msg}"),
    )?;
    Ok(format!(
        "500 runs: {ok} within budget, {unsat} rejected as unsatisfiable; cli exit 2"
    ))
}

fn sampling_policy() -> Outcome {
    let p = SamplingPolicy::default();
    let long = sample_timestamps(200.0, &p).map_err(|e| e.to_string())?;
    ensure(long.len() == 180, || format!("{} timestamps", long.len()))?;
    ensure(long.windows(2).all(|w| w[0] < w[1]), || {
        "not strictly increasing".into()
    })?;
    ensure(
        long.iter()
            .all(|t| t.fract() == 0.0 && (0.0..200.0).contains(t)),
        || "off the 1 s grid".into(),
    )?;
    let short = sample_timestamps(5.0, &p).map_err(|e| e.to_string())?;
    ensure(short == [0.0, 1.0, 2.0, 3.0, 4.0], || {
        format!("5 s clip gave {short:?}")
    })?;
    Ok("200 s -> 180 increasing, 5 s -> [0..4]".into())
}

fn sequence_golden() -> Outcome {
    let cases = common::golden_cases();
    for case in &cases {
        let r =
            format::render(case.format, &case.items).map_err(|e| format!("{}: {e}", case.name))?;
        ensure(r.text == case.expected, || {
            format!("{}: rendered {:?}", case.name, r.text)
        })?;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let formats = [
        SequenceFormat::Image,
        SequenceFormat::Video,
        SequenceFormat::Streaming,
    ];
    for i in 0..500 {
        let fmt = formats[i % 3];
        let items = common::random_items(&mut rng, fmt);
        let r = format::render(fmt, &items).map_err(|e| format!("random {i}: {e}"))?;
        let back = format::parse(fmt, &r.text).map_err(|e| format!("random {i}: {e}"))?;
        ensure(back == items, || {
            format!("random {i}: round trip differs for {:?}", r.text)
        })?;
    }
    Ok(format!(
        "{} fixtures byte-exact, 500 round trips",
        cases.len()
    ))
}

fn interval_format() -> Outcome {
    let s = format::format_time_interval(1.0, 2.0).map_err(|e| e.to_string())?;
    ensure(s == "1.0-2.0 s", || format!("got {s:?}"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    for _ in 0..200 {
        let a = rng.gen_range(0.0..1000.0);
        let b = a + rng.gen_range(0.0..300.0);
        let text = format::format_time_interval(a, b).map_err(|e| e.to_string())?;
        let (x, y) = format::parse_time_interval(&text).map_err(|e| e.to_string())?;
        ensure((x - a).abs() <= 0.05 && (y - b).abs() <= 0.05, || {
            format!("({a}, {b}) -> {text}")
        })?;
    }
    Ok("\"1.0-2.0 s\" verbatim, 200 round trips".into())
}

fn curation_partitions() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    for i in 0..100 {
        let n = rng.gen_range(0..40);
        let batch: Vec<CurationSample> = (0..n)
            .map(|j| {
                let res = Resolution::new(rng.gen_range(1..3000), rng.gen_range(1..3000)).unwrap();
                CurationSample::new(format!("b{i}-{j:03}"), res)
                    .with_score("aesthetic", rng.gen())
                    .with_feature((0..3).map(|_| rng.gen_range(-1.0..1.0)).collect())
            })
            .collect();
        let stages = [
            Stage::Aspect {
                min: 1.0 / 3.0,
                max: 3.0,
            },
            Stage::Score {
                name: "aesthetic".into(),
                threshold: 0.5,
            },
            Stage::Cluster {
                k: rng.gen_range(1..5),
                per_cluster: rng.gen_range(1..4),
            },
        ];
        let pipeline = CurationPipeline::new(stages.to_vec(), 0)
            .with_scorer("aesthetic", StoredScorer("aesthetic".into()));
        for stage in &stages {
            let part = pipeline
                .run_stage(stage, batch.clone())
                .map_err(|e| e.to_string())?;
            let mut ids: Vec<&str> = part
                .kept
                .iter()
                .chain(&part.removed)
                .map(|s| s.id.as_str())
                .collect();
            ids.sort_unstable();
            let before = ids.len();
            ids.dedup();
            let mut want: Vec<&str> = batch.iter().map(|s| s.id.as_str()).collect();
            want.sort_unstable();
            ensure(before == n && ids == want, || {
                format!("batch {i}: {stage} is not a partition")
            })?;
        }
    }

    let mut clouds = Vec::new();
    for k in 0..40 {
        let center = if k % 2 == 0 { 10.0 } else { -10.0 };
        clouds.push(vec![
            center + rng.gen_range(-1.0..1.0),
            center + rng.gen_range(-1.0..1.0),
        ]);
    }
    let first = cluster_select(&clouds, 2, 1, 42).map_err(|e| e.to_string())?;
    ensure(first.len() == 2, || format!("picked {first:?}"))?;
    ensure(
        clouds[first[0]][0].signum() != clouds[first[1]][0].signum(),
        || "both picks from one cloud".into(),
    )?;
    for _ in 0..10 {
        let again = cluster_select(&clouds, 2, 1, 42).map_err(|e| e.to_string())?;
        ensure(again == first, || {
            "cluster_select is not deterministic".into()
        })?;
    }
    Ok("100 batches x 3 stages exact, one pick per cloud, 10 identical reruns".into())
}

fn ocr_format() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let boxes: Vec<TextBox> = (0..10)
        .map(|i| {
            let (x, y) = (rng.gen_range(0.0..0.7), rng.gen_range(0.0..0.7));
            let bbox = [
                x,
                y,
                x + rng.gen_range(0.01..0.3),
                y + rng.gen_range(0.01..0.3),
            ];
            TextBox::new(format!("WORD{i}"), bbox).unwrap()
        })
        .collect();
    let caption = compose_ocr_caption("A shop window", &boxes).map_err(|e| e.to_string())?;
    ensure(
        caption.starts_with("A shop window. The texts in this image are WORD0<box>["),
        || caption.clone(),
    )?;
    let (cap, back) = parse_ocr_caption(&caption).map_err(|e| e.to_string())?;
    ensure(cap == "A shop window" && back.len() == 10, || {
        "caption did not parse back".into()
    })?;
    let worst = back
        .iter()
        .zip(&boxes)
        .flat_map(|(a, b)| {
            a.bbox()
                .into_iter()
                .zip(b.bbox())
                .map(|(x, y)| (x - y).abs())
        })
        .fold(0.0, f64::max);
    ensure(worst <= 5e-4, || format!("box error {worst:e}"))?;

    let res = Resolution::new(480, 640).unwrap();
    let sample = CurationSample::new("ocr", res).with_boxes(boxes.clone());
    let other = CurationSample::new("other", res).with_boxes(vec![TextBox::new(
        "ELSEWHERE",
        [0.1, 0.1, 0.3, 0.2],
    )
    .unwrap()]);
    for task in OcrTask::ALL {
        for seed in 0..20 {
            let r = generate_ocr_instruction(task, &sample, Some(&other), seed)
                .map_err(|e| format!("{task:?}: {e}"))?;
            ensure(
                r.task == task && !r.prompt.is_empty() && !r.answer.is_empty(),
                || format!("{task:?}: empty record"),
            )?;
            let well_formed = match task {
                OcrTask::TextExistence => r.answer == "Yes" || r.answer == "No",
                OcrTask::TextLocalization => {
                    r.answer.starts_with("<box>[") && r.answer.ends_with("]</box>")
                }
                OcrTask::TextRecognition => boxes.iter().any(|b| b.text() == r.answer),
                OcrTask::TextComparison => r.answer == "Image 1" || r.answer == "Image 2",
                OcrTask::Comprehensive => r.answer.matches("<box>").count() == 10,
            };
            ensure(well_formed, || {
                format!("{task:?}: malformed answer {:?}", r.answer)
            })?;
        }
    }
    Ok(format!(
        "box error {worst:.1e}, 5 tasks x 20 seeds well-formed"
    ))
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("static-video compression law", static_video_law),
        ("pruning mask matches brute force", mask_oracle),
        ("threshold monotonicity", threshold_monotonicity),
        ("2d rope isometry and translation", rope_isometry),
        ("2x downsampling contract", downsampling_contract),
        ("token budget safety", budget_safety),
        ("frame sampling policy", sampling_policy),
        ("sequence golden fixtures", sequence_golden),
        ("grounding interval format", interval_format),
        ("curation partitions", curation_partitions),
        ("ocr caption and instructions", ocr_format),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        match check() {
            Ok(detail) => println!("PASS {:>2} {name}: {detail}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!(
        "acceptance: {}/{} passed",
        criteria.len() - failed,
        criteria.len()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
