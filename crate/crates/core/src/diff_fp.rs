//! Differential frame pruning.
//!
//! Every frame is cut into `region_size × region_size` pixel regions, one per
//! emitted (post-merge) vision token. A region of frame `t ≥ 1` is dropped
//! when its distance to the same region of frame `t − 1` is strictly below the
//! threshold. The comparison always uses the raw previous frame, whether or not
//! its region was kept. Frame 0 is never pruned.

use crate::error::{Error, Result};
use crate::geometry::{ImageBuffer, PatchGrid, Resolution};
use crate::rope2d::PositionIndex;

/// Frames of a clip with their presentation times in seconds.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameSequence {
    frames: Vec<ImageBuffer>,
    timestamps: Vec<f64>,
}

impl FrameSequence {
    pub fn new(frames: Vec<ImageBuffer>, timestamps: Vec<f64>) -> Result<Self> {
        let first = frames.first().ok_or_else(|| {
            Error::InvalidInput("a frame sequence needs at least one frame".into())
        })?;
        if frames.len() != timestamps.len() {
            return Err(Error::ShapeMismatch(format!(
                "{} frames but {} timestamps",
                frames.len(),
                timestamps.len()
            )));
        }
        let (res, ch) = (first.resolution(), first.channels());
        if let Some((i, f)) = frames
            .iter()
            .enumerate()
            .find(|(_, f)| f.resolution() != res || f.channels() != ch)
        {
            return Err(Error::ShapeMismatch(format!(
                "frame {i} is {}x{}, expected {res}x{ch}",
                f.resolution(),
                f.channels()
            )));
        }
        if let Some(t) = timestamps.iter().find(|t| !t.is_finite() || **t < 0.0) {
            return Err(Error::InvalidInput(format!("invalid timestamp {t}")));
        }
        for w in timestamps.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::TimestampOrder {
                    prev: w[0],
                    next: w[1],
                });
            }
        }
        Ok(Self { frames, timestamps })
    }

    /// Frames spaced `interval` seconds apart starting at 0.
    pub fn evenly_spaced(frames: Vec<ImageBuffer>, interval: f64) -> Result<Self> {
        let timestamps = (0..frames.len()).map(|i| i as f64 * interval).collect();
        Self::new(frames, timestamps)
    }

    pub fn frames(&self) -> &[ImageBuffer] {
        &self.frames
    }

    pub fn timestamps(&self) -> &[f64] {
        &self.timestamps
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn resolution(&self) -> Resolution {
        self.frames[0].resolution()
    }

    pub fn channels(&self) -> usize {
        self.frames[0].channels()
    }

    /// Keep only the frames at `indices` (ascending).
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut frames = Vec::with_capacity(indices.len());
        let mut timestamps = Vec::with_capacity(indices.len());
        for &i in indices {
            let f = self
                .frames
                .get(i)
                .ok_or_else(|| Error::InvalidInput(format!("frame index {i} out of range")))?;
            frames.push(f.clone());
            timestamps.push(self.timestamps[i]);
        }
        Self::new(frames, timestamps)
    }
}

/// How region differences are reduced to a scalar.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum DistanceKind {
    /// Mean absolute difference, in `[0, 1]` for normalized pixels.
    #[default]
    Mean,
    /// Raw 1-norm of the difference.
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PruneConfig {
    pub threshold: f64,
    pub region_size: usize,
    pub distance: DistanceKind,
}

impl PruneConfig {
    pub const DEFAULT_THRESHOLD: f64 = 0.1;

    pub fn new(threshold: f64, region_size: usize) -> Result<Self> {
        let cfg = Self {
            threshold,
            region_size,
            distance: DistanceKind::Mean,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn with_distance(mut self, distance: DistanceKind) -> Self {
        self.distance = distance;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.threshold.is_nan() || self.threshold < 0.0 {
            return Err(Error::Config(format!(
                "prune threshold must be >= 0, got {}",
                self.threshold
            )));
        }
        if self.region_size == 0 {
            return Err(Error::Config("region_size must be positive".into()));
        }
        Ok(())
    }
}

/// Mean absolute elementwise difference between two patches.
pub fn patch_distance(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::ShapeMismatch(format!(
            "patches of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if a.is_empty() {
        return Err(Error::InvalidInput("cannot compare empty patches".into()));
    }
    Ok(l1_norm(a, b) / a.len() as f64)
}

/// Raw 1-norm of `a − b`.
pub fn l1_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum()
}

/// Keep/drop decision per `(frame, row, col)` token.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PruneMask {
    frames: usize,
    rows: usize,
    cols: usize,
    keep: Vec<bool>,
}

impl PruneMask {
    /// Build a mask from explicit decisions. Frame 0 must be fully kept.
    pub fn new(frames: usize, rows: usize, cols: usize, keep: Vec<bool>) -> Result<Self> {
        if frames == 0 || rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(
                "mask dimensions must be positive".into(),
            ));
        }
        if keep.len() != frames * rows * cols {
            return Err(Error::ShapeMismatch(format!(
                "{frames}x{rows}x{cols} mask needs {} entries, got {}",
                frames * rows * cols,
                keep.len()
            )));
        }
        if keep[..rows * cols].iter().any(|k| !k) {
            return Err(Error::InvalidInput("frame 0 must be fully kept".into()));
        }
        Ok(Self {
            frames,
            rows,
            cols,
            keep,
        })
    }

    pub fn all_kept(frames: usize, rows: usize, cols: usize) -> Result<Self> {
        Self::new(frames, rows, cols, vec![true; frames * rows * cols])
    }

    pub fn frames(&self) -> usize {
        self.frames
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn is_kept(&self, frame: usize, row: usize, col: usize) -> bool {
        self.keep[(frame * self.rows + row) * self.cols + col]
    }

    pub fn as_slice(&self) -> &[bool] {
        &self.keep
    }

    /// Decisions for one frame, row-major.
    pub fn frame(&self, frame: usize) -> &[bool] {
        let n = self.rows * self.cols;
        &self.keep[frame * n..(frame + 1) * n]
    }

    pub fn kept_in_frame(&self, frame: usize) -> usize {
        self.frame(frame).iter().filter(|k| **k).count()
    }
}

/// Compute the keep mask for a clip.
pub fn compute_prune_mask(seq: &FrameSequence, cfg: &PruneConfig) -> Result<PruneMask> {
    cfg.validate()?;
    let res = seq.resolution();
    let region = cfg.region_size;
    for (axis, size) in [("height", res.height), ("width", res.width)] {
        if size % region != 0 {
            return Err(Error::DimensionMismatch {
                axis,
                size,
                multiple: region,
            });
        }
    }
    let rows = res.height / region;
    let cols = res.width / region;
    let per_region = (region * region * seq.channels()) as f64;

    let mut keep = vec![true; rows * cols];
    for pair in seq.frames().windows(2) {
        let (prev, cur) = (&pair[0], &pair[1]);
        for r in 0..rows {
            for c in 0..cols {
                let sum = region_l1(prev, cur, r * region, c * region, region);
                let dist = match cfg.distance {
                    DistanceKind::Mean => sum / per_region,
                    DistanceKind::Sum => sum,
                };
                keep.push(dist >= cfg.threshold);
            }
        }
    }
    PruneMask::new(seq.len(), rows, cols, keep)
}

/// 1-norm between the same `size × size` block of two equally shaped frames,
/// accumulated row by row, pixel by pixel, channel by channel.
fn region_l1(a: &ImageBuffer, b: &ImageBuffer, y0: usize, x0: usize, size: usize) -> f64 {
    let ch = a.channels();
    let width = a.width();
    let (da, db) = (a.data(), b.data());
    let mut sum = 0.0;
    for y in y0..y0 + size {
        let start = (y * width + x0) * ch;
        let end = start + size * ch;
        sum += l1_norm(&da[start..end], &db[start..end]);
    }
    sum
}

/// A vision token that survived pruning.
#[derive(Debug, Clone, PartialEq)]
pub struct VisionToken {
    pub frame: usize,
    pub position: PositionIndex,
    pub timestamp: f64,
    pub feature: Vec<f64>,
}

/// Gather the kept tokens in `(frame, row-major)` order.
pub fn apply_mask(
    grids: &[PatchGrid],
    mask: &PruneMask,
    timestamps: &[f64],
) -> Result<Vec<VisionToken>> {
    if grids.len() != mask.frames || timestamps.len() != mask.frames {
        return Err(Error::ShapeMismatch(format!(
            "mask covers {} frames, got {} grids and {} timestamps",
            mask.frames,
            grids.len(),
            timestamps.len()
        )));
    }
    let mut tokens = Vec::with_capacity(mask.keep.iter().filter(|k| **k).count());
    for (t, grid) in grids.iter().enumerate() {
        if grid.rows() != mask.rows || grid.cols() != mask.cols {
            return Err(Error::ShapeMismatch(format!(
                "frame {t} grid is {}x{}, mask is {}x{}",
                grid.rows(),
                grid.cols(),
                mask.rows,
                mask.cols
            )));
        }
        for r in 0..mask.rows {
            for c in 0..mask.cols {
                if mask.is_kept(t, r, c) {
                    tokens.push(VisionToken {
                        frame: t,
                        position: PositionIndex::new(r, c),
                        timestamp: timestamps[t],
                        feature: grid.cell(r, c).to_vec(),
                    });
                }
            }
        }
    }
    Ok(tokens)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompressionStats {
    pub kept: usize,
    pub dropped: usize,
    /// Fraction of tokens dropped.
    pub ratio: f64,
}

pub fn compression_stats(mask: &PruneMask) -> CompressionStats {
    let total = mask.keep.len();
    let kept = mask.keep.iter().filter(|k| **k).count();
    let dropped = total - kept;
    CompressionStats {
        kept,
        dropped,
        ratio: dropped as f64 / total as f64,
    }
}

/// Per-frame kept/dropped counts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameStats {
    pub frame: usize,
    pub timestamp: f64,
    pub kept: usize,
    pub dropped: usize,
}

pub fn frame_stats(mask: &PruneMask, timestamps: &[f64]) -> Result<Vec<FrameStats>> {
    if timestamps.len() != mask.frames {
        return Err(Error::ShapeMismatch(format!(
            "mask covers {} frames, got {} timestamps",
            mask.frames,
            timestamps.len()
        )));
    }
    let n = mask.rows * mask.cols;
    Ok((0..mask.frames)
        .map(|t| {
            let kept = mask.kept_in_frame(t);
            FrameStats {
                frame: t,
                timestamp: timestamps[t],
                kept,
                dropped: n - kept,
            }
        })
        .collect())
}
