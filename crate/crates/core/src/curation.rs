//! Image-caption curation: aspect-ratio and score filters, feature-space
//! cluster selection, and OCR caption / instruction synthesis.
//!
//! Every filter returns a [`Partition`] that splits its input exactly.
//! Scoring models are injected through [`Scorer`].

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Resolution;

/// A text instance with a normalized `[x1, y1, x2, y2]` box.
#[derive(Debug, Clone, PartialEq)]
pub struct TextBox {
    text: String,
    bbox: [f64; 4],
}

impl TextBox {
    pub fn new(text: impl Into<String>, bbox: [f64; 4]) -> Result<Self> {
        let text = text.into();
        let [x1, y1, x2, y2] = bbox;
        if !bbox.iter().all(|v| (0.0..=1.0).contains(v)) || x1 > x2 || y1 > y2 {
            return Err(Error::InvalidInput(format!(
                "box {bbox:?} for {text:?} is not a normalized [x1, y1, x2, y2]"
            )));
        }
        if text.is_empty() {
            return Err(Error::InvalidInput("text box with empty text".into()));
        }
        if text.contains(BOX_OPEN) || text.contains(BOX_CLOSE) {
            return Err(Error::InvalidInput(format!(
                "text {text:?} contains box markup"
            )));
        }
        Ok(Self { text, bbox })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn bbox(&self) -> [f64; 4] {
        self.bbox
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct CurationSample {
    pub id: String,
    pub resolution: Option<Resolution>,
    pub caption: Option<String>,
    pub feature: Option<Vec<f64>>,
    /// Where `feature` was loaded from, kept so manifests round-trip.
    pub feature_ref: Option<String>,
    pub scores: BTreeMap<String, f64>,
    pub boxes: Vec<TextBox>,
    /// Why the sample was removed, and scorer failures.
    pub notes: Vec<String>,
}

impl CurationSample {
    pub fn new(id: impl Into<String>, resolution: Resolution) -> Self {
        Self {
            id: id.into(),
            resolution: Some(resolution),
            ..Default::default()
        }
    }

    pub fn with_caption(mut self, caption: impl Into<String>) -> Self {
        self.caption = Some(caption.into());
        self
    }

    pub fn with_feature(mut self, feature: Vec<f64>) -> Self {
        self.feature = Some(feature);
        self
    }

    pub fn with_score(mut self, name: impl Into<String>, value: f64) -> Self {
        self.scores.insert(name.into(), value);
        self
    }

    pub fn with_boxes(mut self, boxes: Vec<TextBox>) -> Self {
        self.boxes = boxes;
        self
    }
}

/// Check batch-level invariants: unique ids and a single feature dimension.
pub fn validate_batch(batch: &[CurationSample]) -> Result<()> {
    let mut ids = BTreeSet::new();
    let mut dim = None;
    for s in batch {
        if !ids.insert(s.id.as_str()) {
            return Err(Error::InvalidInput(format!(
                "duplicate sample id {:?}",
                s.id
            )));
        }
        if let Some(f) = &s.feature {
            match dim {
                None => dim = Some(f.len()),
                Some(d) if d != f.len() => {
                    return Err(Error::ShapeMismatch(format!(
                        "sample {:?} has a {}-dim feature, expected {d}",
                        s.id,
                        f.len()
                    )))
                }
                _ => {}
            }
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Partition {
    pub kept: Vec<CurationSample>,
    pub removed: Vec<CurationSample>,
}

impl Partition {
    fn sort_by_id(&mut self) {
        self.kept.sort_by(|a, b| a.id.cmp(&b.id));
        self.removed.sort_by(|a, b| a.id.cmp(&b.id));
    }
}

pub const DEFAULT_MIN_ASPECT: f64 = 1.0 / 3.0;
pub const DEFAULT_MAX_ASPECT: f64 = 3.0;

/// Keep samples with `min_ratio ≤ width/height ≤ max_ratio`.
/// Samples without a resolution are removed.
pub fn filter_aspect_ratio(
    batch: Vec<CurationSample>,
    min_ratio: f64,
    max_ratio: f64,
) -> Result<Partition> {
    if !(min_ratio > 0.0 && min_ratio <= max_ratio) {
        return Err(Error::Config(format!(
            "aspect bounds must satisfy 0 < min <= max, got [{min_ratio}, {max_ratio}]"
        )));
    }
    let mut out = Partition::default();
    for mut s in batch {
        match s.resolution {
            Some(r) if (min_ratio..=max_ratio).contains(&r.aspect_ratio()) => out.kept.push(s),
            Some(r) => {
                s.notes.push(format!(
                    "aspect ratio {:.4} outside [{min_ratio:.4}, {max_ratio:.4}]",
                    r.aspect_ratio()
                ));
                out.removed.push(s);
            }
            None => {
                s.notes.push("no resolution".into());
                out.removed.push(s);
            }
        }
    }
    Ok(out)
}

/// A per-sample quality score, e.g. aesthetics or text-image similarity.
pub trait Scorer {
    fn score(&self, sample: &CurationSample) -> std::result::Result<f64, String>;
}

impl<F> Scorer for F
where
    F: Fn(&CurationSample) -> std::result::Result<f64, String>,
{
    fn score(&self, sample: &CurationSample) -> std::result::Result<f64, String> {
        self(sample)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ConstantScorer(pub f64);

impl Scorer for ConstantScorer {
    fn score(&self, _: &CurationSample) -> std::result::Result<f64, String> {
        Ok(self.0)
    }
}

/// Looks scores up by sample id.
#[derive(Debug, Clone, Default)]
pub struct TableScorer(pub HashMap<String, f64>);

impl Scorer for TableScorer {
    fn score(&self, sample: &CurationSample) -> std::result::Result<f64, String> {
        self.0
            .get(&sample.id)
            .copied()
            .ok_or_else(|| format!("no score for {:?}", sample.id))
    }
}

/// Reads a score precomputed into the sample (e.g. from a manifest).
#[derive(Debug, Clone)]
pub struct StoredScorer(pub String);

impl Scorer for StoredScorer {
    fn score(&self, sample: &CurationSample) -> std::result::Result<f64, String> {
        sample
            .scores
            .get(&self.0)
            .copied()
            .ok_or_else(|| format!("no stored {:?} score", self.0))
    }
}

/// Keep samples scoring at least `threshold`. The score is written to
/// `scores[score_name]` on every sample that could be scored; scorer
/// failures send the sample to `removed` with a note.
pub fn filter_by_score(
    batch: Vec<CurationSample>,
    scorer: &dyn Scorer,
    score_name: &str,
    threshold: f64,
) -> Partition {
    let mut out = Partition::default();
    for mut s in batch {
        match scorer.score(&s) {
            Ok(v) if v.is_finite() => {
                s.scores.insert(score_name.to_string(), v);
                if v >= threshold {
                    out.kept.push(s);
                } else {
                    s.notes.push(format!("{score_name} {v} below {threshold}"));
                    out.removed.push(s);
                }
            }
            Ok(v) => {
                s.notes.push(format!("{score_name} scorer returned {v}"));
                out.removed.push(s);
            }
            Err(e) => {
                s.notes.push(format!("{score_name} scorer failed: {e}"));
                out.removed.push(s);
            }
        }
    }
    out
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

fn mean_of<'a>(points: impl Iterator<Item = &'a [f64]>, dim: usize) -> Vec<f64> {
    let mut acc = vec![0.0; dim];
    let mut n = 0usize;
    for p in points {
        for (a, v) in acc.iter_mut().zip(p) {
            *a += v;
        }
        n += 1;
    }
    if n > 0 {
        for a in &mut acc {
            *a /= n as f64;
        }
    }
    acc
}

const MAX_LLOYD_ITERS: usize = 100;

/// Lexicographic order on feature values, so ties never depend on input
/// order.
fn cmp_features(a: &[f64], b: &[f64]) -> std::cmp::Ordering {
    a.iter()
        .zip(b)
        .map(|(x, y)| x.total_cmp(y))
        .find(|o| o.is_ne())
        .unwrap_or(std::cmp::Ordering::Equal)
}

/// Cluster `features` into `k` groups and keep the `per_cluster` members
/// nearest each centroid.
///
/// Initialization is farthest-point: points are ranked by distance from the
/// global mean (descending, ties by feature value) and the seed picks the
/// starting rank; each further center is the point farthest from all chosen
/// centers. Lloyd iterations follow until assignments settle. Returns sorted
/// indices. With fewer samples than `k`, every index is returned.
pub fn cluster_select(
    features: &[Vec<f64>],
    k: usize,
    per_cluster: usize,
    seed: u64,
) -> Result<Vec<usize>> {
    if features.is_empty() {
        return Err(Error::InvalidInput("no features to cluster".into()));
    }
    if k == 0 || per_cluster == 0 {
        return Err(Error::Config("k and per_cluster must be at least 1".into()));
    }
    let dim = features[0].len();
    if features.iter().any(|f| f.len() != dim) {
        return Err(Error::ShapeMismatch("features differ in dimension".into()));
    }
    if features.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("non-finite feature value".into()));
    }
    let n = features.len();
    if n < k {
        return Ok((0..n).collect());
    }

    let global = mean_of(features.iter().map(Vec::as_slice), dim);
    let mut ranked: Vec<usize> = (0..n).collect();
    ranked.sort_by(|&a, &b| {
        sq_dist(&features[b], &global)
            .total_cmp(&sq_dist(&features[a], &global))
            .then_with(|| cmp_features(&features[a], &features[b]))
            .then(a.cmp(&b))
    });
    let first = ranked[ChaCha8Rng::seed_from_u64(seed).gen_range(0..n)];

    let mut centers: Vec<Vec<f64>> = vec![features[first].clone()];
    let mut nearest: Vec<f64> = features
        .iter()
        .map(|f| sq_dist(f, &features[first]))
        .collect();
    while centers.len() < k {
        let mut best = 0;
        for i in 1..n {
            let farther = nearest[i]
                .total_cmp(&nearest[best])
                .then_with(|| cmp_features(&features[best], &features[i]));
            if farther.is_gt() {
                best = i;
            }
        }
        centers.push(features[best].clone());
        for (i, f) in features.iter().enumerate() {
            nearest[i] = nearest[i].min(sq_dist(f, &features[best]));
        }
    }

    let assign_all = |centers: &[Vec<f64>]| -> Vec<usize> {
        features
            .iter()
            .map(|f| {
                let mut best = 0;
                let mut best_d = sq_dist(f, &centers[0]);
                for (c, center) in centers.iter().enumerate().skip(1) {
                    let d = sq_dist(f, center);
                    if d < best_d {
                        best = c;
                        best_d = d;
                    }
                }
                best
            })
            .collect()
    };

    let mut assignment = assign_all(&centers);
    for _ in 0..MAX_LLOYD_ITERS {
        for (c, center) in centers.iter_mut().enumerate() {
            let members = features
                .iter()
                .zip(&assignment)
                .filter(|(_, a)| **a == c)
                .map(|(f, _)| f.as_slice());
            let mut members = members.peekable();
            if members.peek().is_some() {
                *center = mean_of(members, dim);
            }
        }
        let next = assign_all(&centers);
        if next == assignment {
            break;
        }
        assignment = next;
    }

    let mut selected = Vec::with_capacity(k * per_cluster);
    for (c, center) in centers.iter().enumerate() {
        let mut members: Vec<(f64, usize)> = (0..n)
            .filter(|&i| assignment[i] == c)
            .map(|i| (sq_dist(&features[i], center), i))
            .collect();
        members.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then_with(|| cmp_features(&features[a.1], &features[b.1]))
                .then(a.1.cmp(&b.1))
        });
        selected.extend(members.iter().take(per_cluster).map(|(_, i)| *i));
    }
    selected.sort_unstable();
    selected.dedup();
    Ok(selected)
}

/// One curation step.
#[derive(Debug, Clone, PartialEq)]
pub enum Stage {
    Aspect { min: f64, max: f64 },
    Score { name: String, threshold: f64 },
    Cluster { k: usize, per_cluster: usize },
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Stage::Aspect { min, max } => write!(f, "aspect:{min}:{max}"),
            Stage::Score { name, threshold } => write!(f, "score:{name}:{threshold}"),
            Stage::Cluster { k, per_cluster } => write!(f, "cluster:{k}:{per_cluster}"),
        }
    }
}

impl FromStr for Stage {
    type Err = Error;

    /// `aspect`, `aspect:MIN:MAX`, `score:NAME:THRESHOLD`, `cluster:K:PER_CLUSTER`.
    fn from_str(s: &str) -> Result<Self> {
        let parts: Vec<&str> = s.trim().split(':').collect();
        let num = |v: &str| -> Result<f64> {
            v.parse()
                .map_err(|_| Error::InvalidInput(format!("bad number {v:?} in stage {s:?}")))
        };
        let count = |v: &str| -> Result<usize> {
            v.parse()
                .map_err(|_| Error::InvalidInput(format!("bad count {v:?} in stage {s:?}")))
        };
        match parts.as_slice() {
            ["aspect"] => Ok(Stage::Aspect {
                min: DEFAULT_MIN_ASPECT,
                max: DEFAULT_MAX_ASPECT,
            }),
            ["aspect", min, max] => Ok(Stage::Aspect {
                min: num(min)?,
                max: num(max)?,
            }),
            ["score", name, threshold] if !name.is_empty() => Ok(Stage::Score {
                name: name.to_string(),
                threshold: num(threshold)?,
            }),
            ["cluster", k, per] => Ok(Stage::Cluster {
                k: count(k)?,
                per_cluster: count(per)?,
            }),
            _ => Err(Error::InvalidInput(format!("unknown stage {s:?}"))),
        }
    }
}

/// Parse a comma-separated stage list.
pub fn parse_stages(s: &str) -> Result<Vec<Stage>> {
    s.split(',')
        .filter(|p| !p.trim().is_empty())
        .map(str::parse)
        .collect()
}

/// An ordered chain of stages. Score stages use a registered scorer of the
/// same name, falling back to the score stored on each sample.
pub struct CurationPipeline {
    stages: Vec<Stage>,
    seed: u64,
    scorers: HashMap<String, Box<dyn Scorer>>,
}

impl CurationPipeline {
    pub fn new(stages: Vec<Stage>, seed: u64) -> Self {
        Self {
            stages,
            seed,
            scorers: HashMap::new(),
        }
    }

    pub fn with_scorer(mut self, name: impl Into<String>, scorer: impl Scorer + 'static) -> Self {
        self.scorers.insert(name.into(), Box::new(scorer));
        self
    }

    pub fn stages(&self) -> &[Stage] {
        &self.stages
    }

    /// Run every stage. Samples leave at the first stage that removes them;
    /// both halves are sorted by id after each stage.
    pub fn run(&self, batch: Vec<CurationSample>) -> Result<Partition> {
        validate_batch(&batch)?;
        let mut kept = batch;
        let mut removed = Vec::new();
        for stage in &self.stages {
            let mut part = self.run_stage(stage, kept)?;
            for s in &mut part.removed {
                s.notes.push(format!("removed by {stage}"));
            }
            part.sort_by_id();
            kept = part.kept;
            removed.extend(part.removed);
        }
        let mut out = Partition { kept, removed };
        out.sort_by_id();
        Ok(out)
    }

    pub fn run_stage(&self, stage: &Stage, batch: Vec<CurationSample>) -> Result<Partition> {
        match stage {
            Stage::Aspect { min, max } => filter_aspect_ratio(batch, *min, *max),
            Stage::Score { name, threshold } => Ok(match self.scorers.get(name) {
                Some(scorer) => filter_by_score(batch, scorer.as_ref(), name, *threshold),
                None => filter_by_score(batch, &StoredScorer(name.clone()), name, *threshold),
            }),
            Stage::Cluster { k, per_cluster } => cluster_stage(batch, *k, *per_cluster, self.seed),
        }
    }
}

/// Cluster selection over a batch. Samples without features are removed. A
/// batch no larger than `k · per_cluster` passes through untouched, which
/// keeps the stage idempotent.
fn cluster_stage(
    batch: Vec<CurationSample>,
    k: usize,
    per_cluster: usize,
    seed: u64,
) -> Result<Partition> {
    if k == 0 || per_cluster == 0 {
        return Err(Error::Config("k and per_cluster must be at least 1".into()));
    }
    let mut out = Partition::default();
    let (with, without): (Vec<_>, Vec<_>) = batch.into_iter().partition(|s| s.feature.is_some());
    for mut s in without {
        s.notes.push("no feature vector".into());
        out.removed.push(s);
    }
    if with.len() <= k.saturating_mul(per_cluster) {
        out.kept = with;
        return Ok(out);
    }
    let features: Vec<Vec<f64>> = with
        .iter()
        .map(|s| s.feature.clone().unwrap_or_default())
        .collect();
    let selected: BTreeSet<usize> = cluster_select(&features, k, per_cluster, seed)?
        .into_iter()
        .collect();
    for (i, mut s) in with.into_iter().enumerate() {
        if selected.contains(&i) {
            out.kept.push(s);
        } else {
            s.notes.push("not selected from its cluster".into());
            out.removed.push(s);
        }
    }
    Ok(out)
}

const BOX_OPEN: &str = "<box>";
const BOX_CLOSE: &str = "</box>";
pub const OCR_CAPTION_BRIDGE: &str = ". The texts in this image are ";

/// `<box>[x1, y1, x2, y2]</box>` with three decimals.
pub fn format_box(bbox: [f64; 4]) -> String {
    format!(
        "{BOX_OPEN}[{:.3}, {:.3}, {:.3}, {:.3}]{BOX_CLOSE}",
        bbox[0], bbox[1], bbox[2], bbox[3]
    )
}

fn parse_box_body(s: &str) -> Result<[f64; 4]> {
    let bad = || Error::InvalidInput(format!("malformed box {s:?}"));
    let vals: Vec<f64> = s
        .split(", ")
        .map(|v| v.parse::<f64>().map_err(|_| bad()))
        .collect::<Result<_>>()?;
    vals.try_into().map_err(|_| bad())
}

/// Parse a single `<box>[…]</box>` string.
pub fn parse_box(s: &str) -> Result<[f64; 4]> {
    let body = s
        .strip_prefix("<box>[")
        .and_then(|r| r.strip_suffix("]</box>"))
        .ok_or_else(|| Error::InvalidInput(format!("not a box: {s:?}")))?;
    parse_box_body(body)
}

fn format_entries<'a>(boxes: impl Iterator<Item = &'a TextBox>) -> String {
    boxes
        .map(|b| format!("{}{}", b.text, format_box(b.bbox)))
        .collect::<Vec<_>>()
        .join(", ")
}

/// `{caption}. The texts in this image are {text}<box>[…]</box>, …`
pub fn compose_ocr_caption(caption: &str, boxes: &[TextBox]) -> Result<String> {
    if caption.is_empty() {
        return Err(Error::InvalidInput(
            "OCR caption needs a base caption".into(),
        ));
    }
    Ok(format!(
        "{caption}{OCR_CAPTION_BRIDGE}{}",
        format_entries(boxes.iter())
    ))
}

fn parse_entries(s: &str) -> Result<Vec<TextBox>> {
    let mut boxes = Vec::new();
    let mut rest = s;
    while !rest.is_empty() {
        let open = rest
            .find("<box>[")
            .ok_or_else(|| Error::InvalidInput(format!("expected a box in {rest:?}")))?;
        let text = &rest[..open];
        let after = &rest[open + "<box>[".len()..];
        let close = after
            .find("]</box>")
            .ok_or_else(|| Error::InvalidInput("unterminated box".into()))?;
        boxes.push(TextBox::new(text, parse_box_body(&after[..close])?)?);
        rest = &after[close + "]</box>".len()..];
        if !rest.is_empty() {
            rest = rest
                .strip_prefix(", ")
                .ok_or_else(|| Error::InvalidInput(format!("expected ', ' before {rest:?}")))?;
        }
    }
    Ok(boxes)
}

/// Inverse of [`compose_ocr_caption`] (boxes come back at three-decimal
/// precision).
pub fn parse_ocr_caption(s: &str) -> Result<(String, Vec<TextBox>)> {
    let (caption, entries) = s
        .split_once(OCR_CAPTION_BRIDGE)
        .ok_or_else(|| Error::InvalidInput("missing OCR caption bridge".into()))?;
    Ok((caption.to_string(), parse_entries(entries)?))
}

pub const READING_BAND: f64 = 0.02;

/// Box indices in reading order: rows banded by top edge (a box joins the
/// current row when its top is within [`READING_BAND`] of the row's first
/// box), rows top to bottom, boxes left to right within a row.
pub fn reading_order(boxes: &[TextBox]) -> Vec<usize> {
    let mut by_top: Vec<usize> = (0..boxes.len()).collect();
    by_top.sort_by(|&a, &b| {
        let (ba, bb) = (boxes[a].bbox, boxes[b].bbox);
        ba[1]
            .total_cmp(&bb[1])
            .then(ba[0].total_cmp(&bb[0]))
            .then(a.cmp(&b))
    });
    let mut order = Vec::with_capacity(boxes.len());
    let mut row: Vec<usize> = Vec::new();
    let mut anchor = f64::NEG_INFINITY;
    let flush = |row: &mut Vec<usize>, order: &mut Vec<usize>| {
        row.sort_by(|&a, &b| {
            boxes[a].bbox[0]
                .total_cmp(&boxes[b].bbox[0])
                .then(a.cmp(&b))
        });
        order.append(row);
    };
    for i in by_top {
        let top = boxes[i].bbox[1];
        if top - anchor > READING_BAND {
            flush(&mut row, &mut order);
            anchor = top;
        }
        row.push(i);
    }
    flush(&mut row, &mut order);
    order
}

/// The five OCR instruction sub-tasks.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OcrTask {
    TextExistence,
    TextLocalization,
    TextRecognition,
    TextComparison,
    Comprehensive,
}

impl OcrTask {
    pub const ALL: [OcrTask; 5] = [
        OcrTask::TextExistence,
        OcrTask::TextLocalization,
        OcrTask::TextRecognition,
        OcrTask::TextComparison,
        OcrTask::Comprehensive,
    ];

    pub fn label(self) -> &'static str {
        match self {
            OcrTask::TextExistence => "text existence detection",
            OcrTask::TextLocalization => "text localization",
            OcrTask::TextRecognition => "text recognition within a bounding box",
            OcrTask::TextComparison => "text comparison between images",
            OcrTask::Comprehensive => "comprehensive text detection and recognition",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct InstructionRecord {
    pub task: OcrTask,
    pub prompt: String,
    pub answer: String,
}

const DECOY_TEXTS: &[&str] = &[
    "EXIT", "OPEN", "SALE", "CAFE", "HOTEL", "PARKING", "STOP", "BANK", "PHARMACY", "MENU", "TAXI",
    "BAKERY", "GARAGE", "LIBRARY",
];

fn contains_text(sample: &CurationSample, text: &str) -> bool {
    sample.boxes.iter().any(|b| b.text == text)
}

/// Texts that occur exactly once in the sample, in box order.
fn unique_texts(sample: &CurationSample) -> Vec<&TextBox> {
    sample
        .boxes
        .iter()
        .filter(|b| sample.boxes.iter().filter(|o| o.text == b.text).count() == 1)
        .collect()
}

fn need_boxes(task: OcrTask, found: usize) -> Result<()> {
    if found == 0 {
        return Err(Error::InsufficientBoxes {
            task: task.label(),
            needed: 1,
            found,
        });
    }
    Ok(())
}

/// Build one instruction record for `task`. `other` is the second image for
/// [`OcrTask::TextComparison`] and ignored otherwise.
pub fn generate_ocr_instruction(
    task: OcrTask,
    sample: &CurationSample,
    other: Option<&CurationSample>,
    seed: u64,
) -> Result<InstructionRecord> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let record = |prompt: String, answer: String| InstructionRecord {
        task,
        prompt,
        answer,
    };
    match task {
        OcrTask::TextExistence => {
            need_boxes(task, sample.boxes.len())?;
            let present = rng.gen_bool(0.5);
            let query = if present {
                sample.boxes[rng.gen_range(0..sample.boxes.len())]
                    .text
                    .clone()
            } else {
                let absent: Vec<&str> = DECOY_TEXTS
                    .iter()
                    .copied()
                    .filter(|d| !contains_text(sample, d))
                    .collect();
                match absent.choose(&mut rng) {
                    Some(d) => d.to_string(),
                    None => {
                        let mut q = format!("{}?", sample.boxes[0].text);
                        while contains_text(sample, &q) {
                            q.push('?');
                        }
                        q
                    }
                }
            };
            let answer = if contains_text(sample, &query) {
                "Yes"
            } else {
                "No"
            };
            Ok(record(
                format!("Does the text \"{query}\" appear in this image? Answer Yes or No."),
                answer.into(),
            ))
        }
        OcrTask::TextLocalization => {
            need_boxes(task, sample.boxes.len())?;
            let candidates = unique_texts(sample);
            let b = candidates.choose(&mut rng).ok_or_else(|| {
                Error::InvalidInput(
                    "every text in the sample is repeated; none can be localized".into(),
                )
            })?;
            Ok(record(
                format!(
                    "Where is the text \"{}\" in this image? Answer with a bounding box.",
                    b.text
                ),
                format_box(b.bbox),
            ))
        }
        OcrTask::TextRecognition => {
            need_boxes(task, sample.boxes.len())?;
            let b = &sample.boxes[rng.gen_range(0..sample.boxes.len())];
            Ok(record(
                format!("What text is inside {} in this image?", format_box(b.bbox)),
                b.text.clone(),
            ))
        }
        OcrTask::TextComparison => {
            let other = other.ok_or_else(|| {
                Error::InvalidInput(format!("{} needs a second image", task.label()))
            })?;
            need_boxes(task, sample.boxes.len() + other.boxes.len())?;
            let mut candidates: Vec<(&str, &str)> = Vec::new();
            for b in &sample.boxes {
                if !contains_text(other, &b.text) {
                    candidates.push((&b.text, "Image 1"));
                }
            }
            for b in &other.boxes {
                if !contains_text(sample, &b.text) {
                    candidates.push((&b.text, "Image 2"));
                }
            }
            candidates.dedup();
            let (text, answer) = candidates.choose(&mut rng).ok_or_else(|| {
                Error::InvalidInput("the two images contain the same texts".into())
            })?;
            Ok(record(
                format!("Which image contains the text \"{text}\"? Answer Image 1 or Image 2."),
                answer.to_string(),
            ))
        }
        OcrTask::Comprehensive => {
            need_boxes(task, sample.boxes.len())?;
            let order = reading_order(&sample.boxes);
            Ok(record(
                "Detect and recognize all the text in this image, giving each text with its bounding box.".into(),
                format_entries(order.iter().map(|&i| &sample.boxes[i])),
            ))
        }
    }
}

/// One line of a curation manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub id: String,
    pub width: usize,
    pub height: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub caption: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature: Option<Vec<f64>>,
    /// Path to a whitespace-separated feature file, relative to the manifest.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_file: Option<String>,
    #[serde(default, skip_serializing_if = "BTreeMap::is_empty")]
    pub scores: BTreeMap<String, f64>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub boxes: Vec<ManifestBox>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub notes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestBox {
    pub text: String,
    #[serde(rename = "box")]
    pub bbox: [f64; 4],
}

impl ManifestRecord {
    fn into_sample(self, base: Option<&Path>) -> Result<CurationSample> {
        let feature = match (&self.feature, &self.feature_file) {
            (Some(f), _) => Some(f.clone()),
            (None, Some(rel)) => {
                let path = base.map_or_else(|| Path::new(rel).to_path_buf(), |b| b.join(rel));
                let text = std::fs::read_to_string(&path).map_err(|e| Error::file(&path, e))?;
                let values = text
                    .split_whitespace()
                    .map(|v| v.parse::<f64>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::file(&path, e))?;
                Some(values)
            }
            (None, None) => None,
        };
        let boxes = self
            .boxes
            .into_iter()
            .map(|b| TextBox::new(b.text, b.bbox))
            .collect::<Result<_>>()?;
        Ok(CurationSample {
            id: self.id,
            resolution: Some(Resolution::new(self.height, self.width)?),
            caption: self.caption,
            feature_ref: if self.feature.is_none() {
                self.feature_file
            } else {
                None
            },
            feature,
            scores: self.scores,
            boxes,
            notes: self.notes,
        })
    }

    fn from_sample(s: &CurationSample) -> Self {
        let res = s.resolution.unwrap_or(Resolution {
            height: 0,
            width: 0,
        });
        Self {
            id: s.id.clone(),
            width: res.width,
            height: res.height,
            caption: s.caption.clone(),
            feature: if s.feature_ref.is_some() {
                None
            } else {
                s.feature.clone()
            },
            feature_file: s.feature_ref.clone(),
            scores: s.scores.clone(),
            boxes: s
                .boxes
                .iter()
                .map(|b| ManifestBox {
                    text: b.text.clone(),
                    bbox: b.bbox,
                })
                .collect(),
            notes: s.notes.clone(),
        }
    }
}

/// Parse a JSON-lines manifest. `base` resolves `feature_file` references.
pub fn parse_manifest(src: &str, base: Option<&Path>) -> Result<Vec<CurationSample>> {
    src.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            let rec: ManifestRecord = serde_json::from_str(l)
                .map_err(|e| Error::InvalidInput(format!("manifest line {}: {e}", i + 1)))?;
            rec.into_sample(base)
        })
        .collect()
}

pub fn read_manifest(path: &Path) -> Result<Vec<CurationSample>> {
    let src = std::fs::read_to_string(path).map_err(|e| Error::file(path, e))?;
    parse_manifest(&src, path.parent())
}

/// Serialize samples as JSON lines, one record per line.
pub fn format_manifest(samples: &[CurationSample]) -> String {
    let mut out = String::new();
    for s in samples {
        out.push_str(
            &serde_json::to_string(&ManifestRecord::from_sample(s))
                .expect("manifest records serialize"),
        );
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(id: &str, h: usize, w: usize) -> CurationSample {
        CurationSample::new(id, Resolution::new(h, w).unwrap())
    }

    fn tb(text: &str, b: [f64; 4]) -> TextBox {
        TextBox::new(text, b).unwrap()
    }

    #[test]
    fn text_box_validation() {
        assert!(TextBox::new("a", [0.5, 0.1, 0.4, 0.2]).is_err());
        assert!(TextBox::new("a", [0.0, 0.0, 1.1, 0.2]).is_err());
        assert!(TextBox::new("", [0.0, 0.0, 0.1, 0.2]).is_err());
        assert!(TextBox::new("a<box>", [0.0, 0.0, 0.1, 0.2]).is_err());
    }

    #[test]
    fn aspect_examples() {
        let batch = vec![
            sample("square", 100, 100),
            sample("banner", 100, 1000),
            sample("tall", 900, 300),
        ];
        let part = filter_aspect_ratio(batch, DEFAULT_MIN_ASPECT, DEFAULT_MAX_ASPECT).unwrap();
        let kept: Vec<_> = part.kept.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(kept, vec!["square", "tall"]);
        assert_eq!(part.removed[0].id, "banner");
        assert!(filter_aspect_ratio(vec![], 2.0, 1.0).is_err());
        assert!(filter_aspect_ratio(vec![], 0.0, 1.0).is_err());
    }

    #[test]
    fn score_examples() {
        let batch = || vec![sample("a", 1, 1), sample("b", 1, 1)];
        let part = filter_by_score(batch(), &ConstantScorer(1.0), "aesthetic", 0.5);
        assert_eq!(part.kept.len(), 2);
        assert_eq!(part.kept[0].scores["aesthetic"], 1.0);
        let part = filter_by_score(batch(), &ConstantScorer(0.0), "aesthetic", 0.5);
        assert_eq!(part.removed.len(), 2);
        assert_eq!(part.removed[1].scores["aesthetic"], 0.0);
    }

    #[test]
    fn scorer_failure_routes_to_removed() {
        let table = TableScorer(HashMap::from([("a".to_string(), 0.9)]));
        let part = filter_by_score(
            vec![sample("a", 1, 1), sample("b", 1, 1)],
            &table,
            "sim",
            0.3,
        );
        assert_eq!(part.kept.len(), 1);
        assert_eq!(part.removed[0].id, "b");
        assert!(part.removed[0].notes[0].contains("failed"));
        let nan = |_: &CurationSample| Ok(f64::NAN);
        let part = filter_by_score(vec![sample("a", 1, 1)], &nan, "sim", 0.3);
        assert_eq!(part.removed.len(), 1);
    }

    #[test]
    fn cluster_single_group_picks_nearest_to_mean() {
        let feats = vec![
            vec![0.0, 0.0],
            vec![1.0, 1.0],
            vec![4.0, 4.0],
            vec![1.2, 0.9],
        ];
        // mean (1.55, 1.475): nearest is index 3
        assert_eq!(cluster_select(&feats, 1, 1, 0).unwrap(), vec![3]);
    }

    #[test]
    fn cluster_degenerate_inputs() {
        let feats = vec![vec![0.0], vec![1.0]];
        assert_eq!(cluster_select(&feats, 5, 1, 0).unwrap(), vec![0, 1]);
        assert!(cluster_select(&[], 1, 1, 0).is_err());
        assert!(cluster_select(&feats, 0, 1, 0).is_err());
        assert!(cluster_select(&[vec![0.0], vec![1.0, 2.0]], 1, 1, 0).is_err());
    }

    #[test]
    fn cluster_two_clouds() {
        let mut feats = Vec::new();
        for i in 0..10 {
            let j = i as f64 * 0.01;
            feats.push(vec![j, -j]);
            feats.push(vec![100.0 + j, 100.0 + j]);
        }
        for seed in 0..5 {
            let sel = cluster_select(&feats, 2, 1, seed).unwrap();
            assert_eq!(sel.len(), 2);
            assert_eq!(sel.iter().filter(|&&i| i % 2 == 0).count(), 1);
        }
    }

    #[test]
    fn stage_parsing() {
        let stages =
            parse_stages("aspect,score:aesthetic:0.5,score:sim:0.3,cluster:1000:5").unwrap();
        assert_eq!(
            stages,
            vec![
                Stage::Aspect {
                    min: DEFAULT_MIN_ASPECT,
                    max: DEFAULT_MAX_ASPECT
                },
                Stage::Score {
                    name: "aesthetic".into(),
                    threshold: 0.5
                },
                Stage::Score {
                    name: "sim".into(),
                    threshold: 0.3
                },
                Stage::Cluster {
                    k: 1000,
                    per_cluster: 5
                },
            ]
        );
        assert!(parse_stages("dedup").is_err());
        assert!(parse_stages("score:x").is_err());
        assert!(parse_stages("cluster:a:1").is_err());
    }

    #[test]
    fn pipeline_uses_stored_scores_and_notes_stage() {
        let batch = vec![
            sample("c", 100, 100).with_score("aesthetic", 0.9),
            sample("a", 100, 100).with_score("aesthetic", 0.1),
            sample("b", 10, 100).with_score("aesthetic", 0.9),
            sample("d", 100, 100),
        ];
        let pipe = CurationPipeline::new(parse_stages("aspect,score:aesthetic:0.5").unwrap(), 0);
        let out = pipe.run(batch).unwrap();
        assert_eq!(
            out.kept.iter().map(|s| s.id.as_str()).collect::<Vec<_>>(),
            vec!["c"]
        );
        let removed: Vec<_> = out.removed.iter().map(|s| s.id.as_str()).collect();
        assert_eq!(removed, vec!["a", "b", "d"]);
        assert!(out.removed[1]
            .notes
            .last()
            .unwrap()
            .starts_with("removed by aspect"));
    }

    #[test]
    fn pipeline_rejects_duplicate_ids() {
        let pipe = CurationPipeline::new(vec![], 0);
        assert!(pipe
            .run(vec![sample("a", 1, 1), sample("a", 2, 2)])
            .is_err());
    }

    #[test]
    fn ocr_caption_example() {
        let boxes = [tb("SALE", [0.1, 0.2, 0.3, 0.4])];
        let s = compose_ocr_caption("A shop front", &boxes).unwrap();
        assert_eq!(
            s,
            "A shop front. The texts in this image are SALE<box>[0.100, 0.200, 0.300, 0.400]</box>"
        );
        assert_eq!(
            compose_ocr_caption("A shop front", &[]).unwrap(),
            "A shop front. The texts in this image are "
        );
        assert!(compose_ocr_caption("", &boxes).is_err());
        let (cap, parsed) = parse_ocr_caption(&s).unwrap();
        assert_eq!(cap, "A shop front");
        assert_eq!(parsed, boxes);
        assert_eq!(
            parse_ocr_caption("A shop front. The texts in this image are ")
                .unwrap()
                .1,
            vec![]
        );
    }

    #[test]
    fn ocr_caption_with_commas_in_text() {
        let boxes = [
            tb("10, 20", [0.0, 0.0, 0.5, 0.5]),
            tb("B", [0.5, 0.5, 1.0, 1.0]),
        ];
        let s = compose_ocr_caption("Numbers", &boxes).unwrap();
        assert_eq!(parse_ocr_caption(&s).unwrap().1, boxes);
    }

    #[test]
    fn reading_order_bands_rows() {
        let boxes = [
            tb("right", [0.6, 0.105, 0.9, 0.2]),
            tb("bottom", [0.0, 0.5, 0.2, 0.6]),
            tb("left", [0.1, 0.1, 0.3, 0.2]),
        ];
        assert_eq!(reading_order(&boxes), vec![2, 0, 1]);
    }

    fn shop() -> CurationSample {
        sample("shop", 480, 640).with_boxes(vec![
            tb("SALE", [0.1, 0.2, 0.3, 0.4]),
            tb("OPEN", [0.5, 0.6, 0.7, 0.8]),
            tb("24H", [0.6, 0.1, 0.8, 0.15]),
        ])
    }

    #[test]
    fn existence_answers_match_presence() {
        let s = shop();
        let mut seen = BTreeSet::new();
        for seed in 0..40 {
            let r = generate_ocr_instruction(OcrTask::TextExistence, &s, None, seed).unwrap();
            let query = r.prompt.split('"').nth(1).unwrap();
            let expected = if contains_text(&s, query) {
                "Yes"
            } else {
                "No"
            };
            assert_eq!(r.answer, expected);
            seen.insert(r.answer);
        }
        assert_eq!(seen.len(), 2);
    }

    #[test]
    fn localization_and_recognition() {
        let s = shop();
        for seed in 0..10 {
            let r = generate_ocr_instruction(OcrTask::TextLocalization, &s, None, seed).unwrap();
            let text = r.prompt.split('"').nth(1).unwrap();
            let b = s.boxes.iter().find(|b| b.text == text).unwrap();
            assert_eq!(parse_box(&r.answer).unwrap(), b.bbox);

            let r = generate_ocr_instruction(OcrTask::TextRecognition, &s, None, seed).unwrap();
            let start = r.prompt.find("<box>").unwrap();
            let end = r.prompt.find("</box>").unwrap() + "</box>".len();
            let bbox = parse_box(&r.prompt[start..end]).unwrap();
            let b = s.boxes.iter().find(|b| b.bbox == bbox).unwrap();
            assert_eq!(r.answer, b.text);
        }
    }

    #[test]
    fn recognition_of_sale() {
        let s = sample("x", 10, 10).with_boxes(vec![tb("SALE", [0.1, 0.2, 0.3, 0.4])]);
        let r = generate_ocr_instruction(OcrTask::TextRecognition, &s, None, 7).unwrap();
        assert_eq!(r.answer, "SALE");
        assert!(r.prompt.contains("<box>[0.100, 0.200, 0.300, 0.400]</box>"));
    }

    #[test]
    fn comparison_picks_distinguishing_text() {
        let a = shop();
        let b = sample("b", 10, 10).with_boxes(vec![
            tb("SALE", [0.0, 0.0, 0.1, 0.1]),
            tb("EXIT", [0.2, 0.2, 0.3, 0.3]),
        ]);
        for seed in 0..10 {
            let r = generate_ocr_instruction(OcrTask::TextComparison, &a, Some(&b), seed).unwrap();
            let text = r.prompt.split('"').nth(1).unwrap();
            assert_ne!(text, "SALE");
            let expected = if contains_text(&a, text) {
                "Image 1"
            } else {
                "Image 2"
            };
            assert_eq!(r.answer, expected);
        }
        assert!(generate_ocr_instruction(OcrTask::TextComparison, &a, None, 0).is_err());
        assert!(generate_ocr_instruction(OcrTask::TextComparison, &a, Some(&a), 0).is_err());
    }

    #[test]
    fn comprehensive_in_reading_order() {
        let r = generate_ocr_instruction(OcrTask::Comprehensive, &shop(), None, 0).unwrap();
        assert_eq!(
            r.answer,
            "24H<box>[0.600, 0.100, 0.800, 0.150]</box>, SALE<box>[0.100, 0.200, 0.300, 0.400]</box>, \
             OPEN<box>[0.500, 0.600, 0.700, 0.800]</box>"
        );
    }

    #[test]
    fn insufficient_boxes_names_task() {
        let empty = sample("e", 10, 10);
        for task in [
            OcrTask::TextExistence,
            OcrTask::TextLocalization,
            OcrTask::TextRecognition,
            OcrTask::Comprehensive,
        ] {
            match generate_ocr_instruction(task, &empty, None, 0) {
                Err(Error::InsufficientBoxes { task: name, .. }) => assert_eq!(name, task.label()),
                other => panic!("unexpected {other:?}"),
            }
        }
    }

    #[test]
    fn manifest_roundtrip_with_feature_file() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("f1.txt"), "0.5 1.5\n-2\n").unwrap();
        let src = r#"{"id":"a","width":640,"height":480,"caption":"cat","feature_file":"f1.txt","scores":{"aesthetic":0.7},"boxes":[{"text":"HI","box":[0.1,0.1,0.2,0.2]}]}
{"id":"b","width":10,"height":10,"feature":[1.0,2.0,3.0]}
"#;
        let path = dir.path().join("m.jsonl");
        std::fs::write(&path, src).unwrap();
        let samples = read_manifest(&path).unwrap();
        assert_eq!(samples[0].feature.as_deref(), Some(&[0.5, 1.5, -2.0][..]));
        assert_eq!(
            samples[0].resolution,
            Some(Resolution {
                height: 480,
                width: 640
            })
        );
        assert_eq!(samples[0].boxes[0].text(), "HI");
        let text = format_manifest(&samples);
        assert!(text
            .lines()
            .next()
            .unwrap()
            .contains("\"feature_file\":\"f1.txt\""));
        assert_eq!(parse_manifest(&text, Some(dir.path())).unwrap(), samples);
    }
}
