//! End-to-end video tokenization.
//!
//! ```text
//! frames ─ smart_resize/bilinear ─┬─ patchify ─ encode ─ downsample(merge) ─┐
//!                                 └─ prune mask (raw pixels) ───────────────┴─ apply ─ budget
//! ```

use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::diff_fp::{
    compute_prune_mask, DistanceKind, FrameSequence, PruneConfig, PruneMask, VisionToken,
};
use crate::error::{Error, Result};
use crate::geometry::{
    bilinear_resize, patchify, resample_bilinear, smart_resize, ImageBuffer, PatchGrid, TokenBudget,
};
use crate::rope2d::PositionIndex;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SamplingPolicy {
    fps: f64,
    max_frames: usize,
}

impl SamplingPolicy {
    pub const DEFAULT_FPS: f64 = 1.0;
    pub const DEFAULT_MAX_FRAMES: usize = 180;

    pub fn new(fps: f64, max_frames: usize) -> Result<Self> {
        if !(fps > 0.0 && fps.is_finite()) {
            return Err(Error::Config(format!("fps must be positive, got {fps}")));
        }
        if max_frames == 0 {
            return Err(Error::Config("max_frames must be at least 1".into()));
        }
        Ok(Self { fps, max_frames })
    }

    pub fn fps(&self) -> f64 {
        self.fps
    }

    pub fn max_frames(&self) -> usize {
        self.max_frames
    }
}

impl Default for SamplingPolicy {
    fn default() -> Self {
        Self {
            fps: Self::DEFAULT_FPS,
            max_frames: Self::DEFAULT_MAX_FRAMES,
        }
    }
}

/// `m` indices spread evenly over `0..n`, rounded to nearest, first and last
/// included. Returns `0..n` when `m >= n`.
pub fn uniform_indices(n: usize, m: usize) -> Vec<usize> {
    if m >= n {
        return (0..n).collect();
    }
    match m {
        0 => Vec::new(),
        1 => vec![0],
        _ => (0..m)
            .map(|j| (2 * j * (n - 1) + (m - 1)) / (2 * (m - 1)))
            .collect(),
    }
}

/// Frame times for a clip of `duration` seconds.
///
/// Samples at `1/fps` spacing from 0, then thins uniformly in index space to
/// `max_frames` when there are too many.
pub fn sample_timestamps(duration: f64, policy: &SamplingPolicy) -> Result<Vec<f64>> {
    if !(duration > 0.0 && duration.is_finite()) {
        return Err(Error::InvalidInput(format!(
            "duration must be positive, got {duration}"
        )));
    }
    let fps = policy.fps;
    let mut n = ((duration * fps).ceil() as usize).max(1);
    while n > 1 && (n - 1) as f64 / fps >= duration {
        n -= 1;
    }
    while (n as f64 / fps) < duration {
        n += 1;
    }
    Ok(uniform_indices(n, policy.max_frames)
        .into_iter()
        .map(|k| k as f64 / fps)
        .collect())
}

/// For every target time pick the nearest available frame (earlier frame on
/// ties). Returns `(frame index, target time)` pairs in ascending frame order;
/// when several targets land on one frame the earliest target wins.
pub fn match_timestamps(available: &[f64], targets: &[f64]) -> Vec<(usize, f64)> {
    let mut picked: Vec<(usize, f64)> = targets
        .iter()
        .filter_map(|&t| {
            available
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - t).abs().total_cmp(&(b.1 - t).abs()))
                .map(|(i, _)| (i, t))
        })
        .collect();
    picked.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
    picked.dedup_by_key(|p| p.0);
    picked
}

/// Maps a pixel patch grid to a feature grid of the same `rows × cols`.
pub trait Encoder: Send + Sync {
    fn name(&self) -> &str;

    fn encode(&self, patches: &PatchGrid) -> Result<PatchGrid>;
}

/// Flattened pixels as features.
#[derive(Debug, Clone, Copy, Default)]
pub struct IdentityEncoder;

impl Encoder for IdentityEncoder {
    fn name(&self) -> &str {
        "identity"
    }

    fn encode(&self, patches: &PatchGrid) -> Result<PatchGrid> {
        PatchGrid::from_features(
            patches.rows(),
            patches.cols(),
            patches.dim(),
            patches.as_slice().to_vec(),
        )
    }
}

/// Seeded random linear projection to `dim` features.
///
/// Weights are drawn uniformly from `[-1, 1) / √in_dim` with a ChaCha8 stream
/// keyed on the seed, so results are reproducible across platforms.
#[derive(Debug, Clone, Copy)]
pub struct RandomProjectionEncoder {
    dim: usize,
    seed: u64,
}

impl RandomProjectionEncoder {
    pub const DEFAULT_DIM: usize = 64;

    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(Error::Config("projection dim must be positive".into()));
        }
        Ok(Self { dim, seed })
    }

    fn weights(&self, in_dim: usize) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let scale = 1.0 / (in_dim as f64).sqrt();
        (0..self.dim * in_dim)
            .map(|_| rng.gen_range(-1.0..1.0) * scale)
            .collect()
    }
}

impl Encoder for RandomProjectionEncoder {
    fn name(&self) -> &str {
        "randproj"
    }

    fn encode(&self, patches: &PatchGrid) -> Result<PatchGrid> {
        let in_dim = patches.dim();
        let w = self.weights(in_dim);
        let mut out = Vec::with_capacity(patches.len() * self.dim);
        for cell in patches.iter_cells() {
            for row in w.chunks_exact(in_dim) {
                out.push(row.iter().zip(cell).map(|(a, b)| a * b).sum());
            }
        }
        PatchGrid::from_features(patches.rows(), patches.cols(), self.dim, out)
    }
}

/// An [`Encoder`] that passed the shape probe.
#[derive(Clone)]
pub struct EncoderPlug {
    inner: Arc<dyn Encoder>,
}

impl fmt::Debug for EncoderPlug {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_tuple("EncoderPlug")
            .field(&self.inner.name())
            .finish()
    }
}

impl EncoderPlug {
    /// Register an encoder after checking it preserves grid shape and is
    /// deterministic on a small probe grid.
    pub fn register(encoder: impl Encoder + 'static) -> Result<Self> {
        let probe_img =
            ImageBuffer::from_fn(4, 6, 3, |r, c, ch| ((r * 6 + c) * 3 + ch) as f64 / 71.0)?;
        let probe = patchify(&probe_img, 2)?;
        let a = encoder
            .encode(&probe)
            .map_err(|e| Error::EncoderShape(format!("{}: {e}", encoder.name())))?;
        if (a.rows(), a.cols()) != (probe.rows(), probe.cols()) {
            return Err(Error::EncoderShape(format!(
                "{} maps a {}x{} grid to {}x{}",
                encoder.name(),
                probe.rows(),
                probe.cols(),
                a.rows(),
                a.cols()
            )));
        }
        let b = encoder.encode(&probe)?;
        if a != b {
            return Err(Error::EncoderShape(format!(
                "{} is not deterministic",
                encoder.name()
            )));
        }
        Ok(Self {
            inner: Arc::new(encoder),
        })
    }

    pub fn identity() -> Self {
        Self::register(IdentityEncoder).expect("identity encoder preserves shape")
    }

    pub fn random_projection(dim: usize, seed: u64) -> Result<Self> {
        Self::register(RandomProjectionEncoder::new(dim, seed)?)
    }

    pub fn name(&self) -> &str {
        self.inner.name()
    }

    pub fn encode(&self, patches: &PatchGrid) -> Result<PatchGrid> {
        let out = self.inner.encode(patches)?;
        if (out.rows(), out.cols()) != (patches.rows(), patches.cols()) {
            return Err(Error::EncoderShape(format!(
                "{} changed grid shape at run time",
                self.name()
            )));
        }
        Ok(out)
    }
}

/// Spatially downsample a feature grid by bilinear sampling at block centers.
///
/// For `factor = 2` every output vector is the mean of its 2×2 block.
pub fn downsample_tokens(grid: &PatchGrid, factor: usize) -> Result<PatchGrid> {
    if factor == 0 {
        return Err(Error::Config("downsample factor must be positive".into()));
    }
    if !grid.rows().is_multiple_of(factor) || !grid.cols().is_multiple_of(factor) {
        return Err(Error::ShapeMismatch(format!(
            "{}x{} grid is not divisible by {factor}",
            grid.rows(),
            grid.cols()
        )));
    }
    if factor == 1 {
        return Ok(grid.clone());
    }
    let (rows, cols) = (grid.rows() / factor, grid.cols() / factor);
    let cells = resample_bilinear(
        grid.as_slice(),
        grid.rows(),
        grid.cols(),
        grid.dim(),
        rows,
        cols,
    );
    PatchGrid::from_features(rows, cols, grid.dim(), cells)
}

#[derive(Debug, Clone, PartialEq)]
pub enum SequenceElement {
    Vision(VisionToken),
    Text(String),
}

/// Ordered vision and text tokens.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TokenSequence {
    elements: Vec<SequenceElement>,
}

/// Consecutive vision tokens sharing a frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameRun {
    pub frame: usize,
    pub timestamp: f64,
    pub tokens: usize,
}

impl TokenSequence {
    pub fn new(elements: Vec<SequenceElement>) -> Self {
        Self { elements }
    }

    pub fn from_vision(tokens: Vec<VisionToken>) -> Self {
        Self {
            elements: tokens.into_iter().map(SequenceElement::Vision).collect(),
        }
    }

    pub fn push_text(&mut self, text: impl Into<String>) {
        self.elements.push(SequenceElement::Text(text.into()));
    }

    pub fn elements(&self) -> &[SequenceElement] {
        &self.elements
    }

    pub fn vision_tokens(&self) -> impl Iterator<Item = &VisionToken> {
        self.elements.iter().filter_map(|e| match e {
            SequenceElement::Vision(v) => Some(v),
            SequenceElement::Text(_) => None,
        })
    }

    pub fn vision_count(&self) -> usize {
        self.vision_tokens().count()
    }

    /// Text elements each count as one token.
    pub fn text_count(&self) -> usize {
        self.elements.len() - self.vision_count()
    }

    pub fn total_count(&self) -> usize {
        self.elements.len()
    }

    /// Vision tokens grouped into runs of the same frame, in order.
    pub fn frame_runs(&self) -> Vec<FrameRun> {
        let mut runs: Vec<FrameRun> = Vec::new();
        for v in self.vision_tokens() {
            match runs.last_mut() {
                Some(run) if run.frame == v.frame => run.tokens += 1,
                _ => runs.push(FrameRun {
                    frame: v.frame,
                    timestamp: v.timestamp,
                    tokens: 1,
                }),
            }
        }
        runs
    }
}

/// Pick the largest uniform subset of frames whose tokens fit the budget.
///
/// `frame_tokens` lists the vision-token count of every frame present in the
/// sequence. Returns `None` when everything already fits.
pub fn select_frames_for_budget(
    frame_tokens: &[usize],
    text_tokens: usize,
    budget: &TokenBudget,
    policy: &SamplingPolicy,
) -> Result<Option<Vec<usize>>> {
    let vision: usize = frame_tokens.iter().sum();
    if text_tokens > budget.max_total_tokens() {
        return Err(Error::BudgetExceeded {
            vision,
            total: vision + text_tokens,
            max_vision: budget.max_vision_tokens(),
            max_total: budget.max_total_tokens(),
        });
    }
    let available = budget
        .max_vision_tokens()
        .min(budget.max_total_tokens() - text_tokens);
    let frames = frame_tokens.len();
    if vision <= available && frames <= policy.max_frames() {
        return Ok(None);
    }
    for m in (1..=frames.min(policy.max_frames())).rev() {
        let picked = uniform_indices(frames, m);
        let count: usize = picked.iter().map(|&i| frame_tokens[i]).sum();
        if count <= available {
            return Ok(Some(picked));
        }
    }
    Err(Error::UnsatisfiableBudget {
        frame_tokens: frame_tokens[0],
        available,
    })
}

/// Drop whole frames, uniformly spaced, until the sequence fits the budget.
/// Text elements are never removed. A sequence that already fits is
/// returned unchanged.
pub fn enforce_budget(
    seq: TokenSequence,
    budget: &TokenBudget,
    policy: &SamplingPolicy,
) -> Result<TokenSequence> {
    let runs = frames_with_counts(&seq);
    let counts: Vec<usize> = runs.iter().map(|(_, n)| *n).collect();
    let Some(picked) = select_frames_for_budget(&counts, seq.text_count(), budget, policy)? else {
        return Ok(seq);
    };
    let keep: Vec<usize> = picked.iter().map(|&i| runs[i].0).collect();
    let elements = seq
        .elements
        .into_iter()
        .filter(|e| match e {
            SequenceElement::Vision(v) => keep.binary_search(&v.frame).is_ok(),
            SequenceElement::Text(_) => true,
        })
        .collect();
    Ok(TokenSequence { elements })
}

/// Distinct frame ids in ascending order with their token counts.
fn frames_with_counts(seq: &TokenSequence) -> Vec<(usize, usize)> {
    let mut counts = std::collections::BTreeMap::new();
    for v in seq.vision_tokens() {
        *counts.entry(v.frame).or_insert(0usize) += 1;
    }
    counts.into_iter().collect()
}

/// Resize every frame onto the token lattice for `patch_size · merge`.
///
/// The target resolution comes from the first frame, with the vision budget
/// applied per frame.
pub fn prepare_frames(
    frames: Vec<ImageBuffer>,
    timestamps: Vec<f64>,
    patch_size: usize,
    merge: usize,
    max_vision_tokens: usize,
) -> Result<FrameSequence> {
    let first = frames
        .first()
        .ok_or_else(|| Error::InvalidInput("no frames to prepare".into()))?;
    let target = smart_resize(first.resolution(), patch_size, merge, max_vision_tokens)?;
    let resized = frames
        .into_iter()
        .map(|f| {
            if f.resolution() == target {
                Ok(f)
            } else {
                bilinear_resize(&f, target)
            }
        })
        .collect::<Result<Vec<_>>>()?;
    FrameSequence::new(resized, timestamps)
}

/// Configured video tokenizer.
#[derive(Debug, Clone)]
pub struct VideoTokenizer {
    pub encoder: EncoderPlug,
    pub patch_size: usize,
    pub merge: usize,
    pub threshold: f64,
    pub distance: DistanceKind,
    pub budget: TokenBudget,
    pub policy: SamplingPolicy,
}

/// Result of [`VideoTokenizer::tokenize`].
#[derive(Debug, Clone)]
pub struct TokenizedVideo {
    pub sequence: TokenSequence,
    /// Mask over all input frames, before budget enforcement.
    pub mask: PruneMask,
    /// Input frame indices that survived budget enforcement.
    pub frames: Vec<usize>,
}

impl VideoTokenizer {
    pub fn new(encoder: EncoderPlug) -> Self {
        Self {
            encoder,
            patch_size: 14,
            merge: 2,
            threshold: PruneConfig::DEFAULT_THRESHOLD,
            distance: DistanceKind::Mean,
            budget: TokenBudget::default(),
            policy: SamplingPolicy::default(),
        }
    }

    pub fn region_size(&self) -> usize {
        self.patch_size * self.merge
    }

    pub fn prune_config(&self) -> Result<PruneConfig> {
        Ok(PruneConfig::new(self.threshold, self.region_size())?.with_distance(self.distance))
    }

    /// Tokenize frames already sized to multiples of `patch_size · merge`.
    ///
    /// The mask and budget only depend on pixel data, so frames removed by
    /// the budget are never encoded.
    pub fn tokenize(&self, seq: &FrameSequence) -> Result<TokenizedVideo> {
        if self.patch_size == 0 || self.merge == 0 {
            return Err(Error::Config(
                "patch_size and merge must be positive".into(),
            ));
        }
        let mask = compute_prune_mask(seq, &self.prune_config()?)?;

        let present: Vec<(usize, usize)> = (0..mask.frames())
            .map(|t| (t, mask.kept_in_frame(t)))
            .filter(|(_, n)| *n > 0)
            .collect();
        let counts: Vec<usize> = present.iter().map(|(_, n)| *n).collect();
        let frames: Vec<usize> =
            match select_frames_for_budget(&counts, 0, &self.budget, &self.policy)? {
                None => present.iter().map(|(t, _)| *t).collect(),
                Some(picked) => picked.iter().map(|&i| present[i].0).collect(),
            };

        let mut tokens = Vec::with_capacity(frames.iter().map(|&t| mask.kept_in_frame(t)).sum());
        for &t in &frames {
            let grid = self.encode_frame(&seq.frames()[t])?;
            if (grid.rows(), grid.cols()) != (mask.rows(), mask.cols()) {
                return Err(Error::ShapeMismatch(format!(
                    "token grid {}x{} does not match mask {}x{}",
                    grid.rows(),
                    grid.cols(),
                    mask.rows(),
                    mask.cols()
                )));
            }
            for r in 0..mask.rows() {
                for c in 0..mask.cols() {
                    if mask.is_kept(t, r, c) {
                        tokens.push(VisionToken {
                            frame: t,
                            position: PositionIndex::new(r, c),
                            timestamp: seq.timestamps()[t],
                            feature: grid.cell(r, c).to_vec(),
                        });
                    }
                }
            }
        }
        Ok(TokenizedVideo {
            sequence: TokenSequence::from_vision(tokens),
            mask,
            frames,
        })
    }

    /// patchify, encode, downsample.
    pub fn encode_frame(&self, frame: &ImageBuffer) -> Result<PatchGrid> {
        let patches = patchify(frame, self.patch_size)?;
        let features = self.encoder.encode(&patches)?;
        downsample_tokens(&features, self.merge)
    }

    /// Tokenize a single image: resize onto the lattice, then encode. No
    /// pruning applies.
    pub fn tokenize_image(&self, image: &ImageBuffer) -> Result<Vec<VisionToken>> {
        let target = smart_resize(
            image.resolution(),
            self.patch_size,
            self.merge,
            self.budget.max_vision_tokens(),
        )?;
        let resized = if target == image.resolution() {
            image.clone()
        } else {
            bilinear_resize(image, target)?
        };
        let grid = self.encode_frame(&resized)?;
        let mut tokens = Vec::with_capacity(grid.len());
        for r in 0..grid.rows() {
            for c in 0..grid.cols() {
                tokens.push(VisionToken {
                    frame: 0,
                    position: PositionIndex::new(r, c),
                    timestamp: 0.0,
                    feature: grid.cell(r, c).to_vec(),
                });
            }
        }
        Ok(tokens)
    }
}

/// Tokenize a prepared clip with the default sampling policy.
pub fn tokenize_video(
    seq: &FrameSequence,
    encoder: &EncoderPlug,
    prune: &PruneConfig,
    budget: &TokenBudget,
    patch_size: usize,
    merge: usize,
) -> Result<TokenSequence> {
    if prune.region_size != patch_size * merge {
        return Err(Error::Config(format!(
            "prune region {} must equal patch_size * merge = {}",
            prune.region_size,
            patch_size * merge
        )));
    }
    let tokenizer = VideoTokenizer {
        encoder: encoder.clone(),
        patch_size,
        merge,
        threshold: prune.threshold,
        distance: prune.distance,
        budget: *budget,
        policy: SamplingPolicy::default(),
    };
    Ok(tokenizer.tokenize(seq)?.sequence)
}
