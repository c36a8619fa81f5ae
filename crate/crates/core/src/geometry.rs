//! Raster containers, resolution arithmetic, patch extraction and bilinear
//! interpolation.
//!
//! Pixel intensities are `f64` values normalized to `[0, 1]`. Images are
//! stored row-major with interleaved channels (`HWC`).

use crate::error::{Error, Result};

/// An `H×W×C` grid of intensities in `[0, 1]`, row-major, channels interleaved.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageBuffer {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f64>,
}

impl ImageBuffer {
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f64>) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput(format!(
                "image must be at least 1x1, got {height}x{width}"
            )));
        }
        if channels != 1 && channels != 3 {
            return Err(Error::InvalidInput(format!(
                "images have 1 or 3 channels, got {channels}"
            )));
        }
        let expected = height * width * channels;
        if data.len() != expected {
            return Err(Error::ShapeMismatch(format!(
                "{height}x{width}x{channels} image needs {expected} values, got {}",
                data.len()
            )));
        }
        if let Some((i, v)) = data
            .iter()
            .enumerate()
            .find(|(_, v)| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::InvalidInput(format!(
                "intensity {v} at index {i} is outside [0, 1]"
            )));
        }
        Ok(Self {
            height,
            width,
            channels,
            data,
        })
    }

    /// Image filled with a single intensity.
    pub fn filled(height: usize, width: usize, channels: usize, value: f64) -> Result<Self> {
        Self::new(
            height,
            width,
            channels,
            vec![value; height * width * channels],
        )
    }

    /// Build an image by evaluating `f(row, col, channel)` at every sample.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f64,
    ) -> Result<Self> {
        let mut data = Vec::with_capacity(height * width * channels);
        for r in 0..height {
            for c in 0..width {
                for ch in 0..channels {
                    data.push(f(r, c, ch));
                }
            }
        }
        Self::new(height, width, channels, data)
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn resolution(&self) -> Resolution {
        Resolution {
            height: self.height,
            width: self.width,
        }
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize, channel: usize) -> f64 {
        self.data[(row * self.width + col) * self.channels + channel]
    }

    /// All channels of one pixel.
    #[inline]
    pub fn pixel(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.width + col) * self.channels;
        &self.data[start..start + self.channels]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Resolution {
    pub height: usize,
    pub width: usize,
}

impl Resolution {
    pub fn new(height: usize, width: usize) -> Result<Self> {
        if height == 0 || width == 0 {
            return Err(Error::InvalidInput(format!(
                "resolution must be at least 1x1, got {height}x{width}"
            )));
        }
        Ok(Self { height, width })
    }

    /// Width over height.
    pub fn aspect_ratio(&self) -> f64 {
        self.width as f64 / self.height as f64
    }
}

impl std::fmt::Display for Resolution {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}x{}", self.height, self.width)
    }
}

/// A `rows×cols` lattice of equally sized cells.
///
/// Cells hold either raw pixel patches (`patch_size² · channels` values in
/// block row-major, channel-interleaved order) or feature vectors produced by
/// an encoder. `patch_size` is `None` for feature grids.
#[derive(Debug, Clone, PartialEq)]
pub struct PatchGrid {
    rows: usize,
    cols: usize,
    patch_size: Option<usize>,
    dim: usize,
    cells: Vec<f64>,
}

impl PatchGrid {
    /// A grid of feature vectors, each of length `dim`, laid out row-major.
    pub fn from_features(rows: usize, cols: usize, dim: usize, cells: Vec<f64>) -> Result<Self> {
        Self::build(rows, cols, None, dim, cells)
    }

    fn build(
        rows: usize,
        cols: usize,
        patch_size: Option<usize>,
        dim: usize,
        cells: Vec<f64>,
    ) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::InvalidInput(format!(
                "grid must have at least one cell, got {rows}x{cols}"
            )));
        }
        if dim == 0 {
            return Err(Error::InvalidInput("cells must be non-empty".into()));
        }
        if cells.len() != rows * cols * dim {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{cols} grid of {dim}-dim cells needs {} values, got {}",
                rows * cols * dim,
                cells.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            patch_size,
            dim,
            cells,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// Pixel patch edge length, or `None` for feature grids.
    pub fn patch_size(&self) -> Option<usize> {
        self.patch_size
    }

    /// Length of every cell.
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    #[inline]
    pub fn cell(&self, row: usize, col: usize) -> &[f64] {
        let start = (row * self.cols + col) * self.dim;
        &self.cells[start..start + self.dim]
    }

    /// Cells in row-major order.
    pub fn iter_cells(&self) -> impl Iterator<Item = &[f64]> {
        self.cells.chunks_exact(self.dim)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.cells
    }
}

/// Token limits for one training sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TokenBudget {
    max_total_tokens: usize,
    max_vision_tokens: usize,
}

impl TokenBudget {
    pub const DEFAULT_MAX_TOTAL: usize = 16384;
    pub const DEFAULT_MAX_VISION: usize = 10240;

    pub fn new(max_total_tokens: usize, max_vision_tokens: usize) -> Result<Self> {
        if max_total_tokens == 0 || max_vision_tokens == 0 {
            return Err(Error::Config("token budgets must be positive".into()));
        }
        if max_vision_tokens > max_total_tokens {
            return Err(Error::Config(format!(
                "vision budget {max_vision_tokens} exceeds total budget {max_total_tokens}"
            )));
        }
        Ok(Self {
            max_total_tokens,
            max_vision_tokens,
        })
    }

    pub fn max_total_tokens(&self) -> usize {
        self.max_total_tokens
    }

    pub fn max_vision_tokens(&self) -> usize {
        self.max_vision_tokens
    }
}

impl Default for TokenBudget {
    fn default() -> Self {
        Self {
            max_total_tokens: Self::DEFAULT_MAX_TOTAL,
            max_vision_tokens: Self::DEFAULT_MAX_VISION,
        }
    }
}

/// Snap a resolution onto the token lattice.
///
/// Each side is floored to a multiple of `patch_size · merge_factor` (at
/// least one block). If the resulting post-merge token count exceeds
/// `max_vision_tokens`, both sides are scaled by `√(budget / tokens)` and
/// snapped again. Never upsamples except to reach a single block.
pub fn smart_resize(
    input: Resolution,
    patch_size: usize,
    merge_factor: usize,
    max_vision_tokens: usize,
) -> Result<Resolution> {
    if patch_size == 0 || merge_factor == 0 || max_vision_tokens == 0 {
        return Err(Error::Config(format!(
            "patch_size, merge_factor and max_vision_tokens must be positive \
             (got {patch_size}, {merge_factor}, {max_vision_tokens})"
        )));
    }
    let block = patch_size * merge_factor;
    let mut rows = (input.height / block).max(1);
    let mut cols = (input.width / block).max(1);

    if rows * cols > max_vision_tokens {
        let h = input.height as f64 / block as f64;
        let w = input.width as f64 / block as f64;
        let scale = (max_vision_tokens as f64 / (h * w)).sqrt();
        rows = ((h * scale).floor() as usize).clamp(1, rows);
        cols = ((w * scale).floor() as usize).clamp(1, cols);
        // floor can overshoot by rounding, and a side clamped up to one block
        // leaves the other side unconstrained
        while rows * cols > max_vision_tokens {
            if rows >= cols {
                rows = (max_vision_tokens / cols).min(rows - 1).max(1);
            } else {
                cols = (max_vision_tokens / rows).min(cols - 1).max(1);
            }
        }
    }

    Ok(Resolution {
        height: rows * block,
        width: cols * block,
    })
}

/// Split an image into non-overlapping `patch_size × patch_size` blocks.
pub fn patchify(image: &ImageBuffer, patch_size: usize) -> Result<PatchGrid> {
    if patch_size == 0 {
        return Err(Error::Config("patch_size must be positive".into()));
    }
    check_multiple("height", image.height, patch_size)?;
    check_multiple("width", image.width, patch_size)?;

    let rows = image.height / patch_size;
    let cols = image.width / patch_size;
    let ch = image.channels;
    let row_len = patch_size * ch;
    let mut cells = Vec::with_capacity(image.data.len());
    for r in 0..rows {
        for c in 0..cols {
            for y in 0..patch_size {
                let start = ((r * patch_size + y) * image.width + c * patch_size) * ch;
                cells.extend_from_slice(&image.data[start..start + row_len]);
            }
        }
    }
    PatchGrid::build(
        rows,
        cols,
        Some(patch_size),
        patch_size * patch_size * ch,
        cells,
    )
}

/// Reassemble a pixel grid produced by [`patchify`].
pub fn unpatchify(grid: &PatchGrid, channels: usize) -> Result<ImageBuffer> {
    let patch_size = grid
        .patch_size
        .ok_or_else(|| Error::ShapeMismatch("feature grids cannot be unpatchified".into()))?;
    if grid.dim != patch_size * patch_size * channels {
        return Err(Error::ShapeMismatch(format!(
            "cell length {} does not match {patch_size}x{patch_size}x{channels}",
            grid.dim
        )));
    }
    let height = grid.rows * patch_size;
    let width = grid.cols * patch_size;
    let row_len = patch_size * channels;
    let mut data = vec![0.0; height * width * channels];
    for r in 0..grid.rows {
        for c in 0..grid.cols {
            let cell = grid.cell(r, c);
            for y in 0..patch_size {
                let dst = ((r * patch_size + y) * width + c * patch_size) * channels;
                data[dst..dst + row_len].copy_from_slice(&cell[y * row_len..(y + 1) * row_len]);
            }
        }
    }
    ImageBuffer::new(height, width, channels, data)
}

fn check_multiple(axis: &'static str, size: usize, multiple: usize) -> Result<()> {
    if !size.is_multiple_of(multiple) {
        return Err(Error::DimensionMismatch {
            axis,
            size,
            multiple,
        });
    }
    Ok(())
}

/// Bilinear resize with half-pixel centers and edge clamping.
pub fn bilinear_resize(image: &ImageBuffer, target: Resolution) -> Result<ImageBuffer> {
    if target.height == 0 || target.width == 0 {
        return Err(Error::InvalidInput(format!(
            "target resolution must be at least 1x1, got {target}"
        )));
    }
    let mut data = resample_bilinear(
        &image.data,
        image.height,
        image.width,
        image.channels,
        target.height,
        target.width,
    );
    // lerps of values in [0, 1] stay in range up to one ulp
    for v in &mut data {
        *v = v.clamp(0.0, 1.0);
    }
    ImageBuffer::new(target.height, target.width, image.channels, data)
}

/// Sample positions and weights along one axis.
fn axis_taps(src: usize, dst: usize) -> Vec<(usize, usize, f64)> {
    let scale = src as f64 / dst as f64;
    (0..dst)
        .map(|i| {
            let x = ((i as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
            let lo = x.floor() as usize;
            let hi = (lo + 1).min(src - 1);
            (lo, hi, x - lo as f64)
        })
        .collect()
}

/// Bilinear resampling of an `H×W` lattice of `dim`-vectors.
///
/// Written in lerp form (`a + t·(b − a)`) so that constant inputs are
/// reproduced exactly.
pub(crate) fn resample_bilinear(
    src: &[f64],
    src_h: usize,
    src_w: usize,
    dim: usize,
    dst_h: usize,
    dst_w: usize,
) -> Vec<f64> {
    let ys = axis_taps(src_h, dst_h);
    let xs = axis_taps(src_w, dst_w);
    let at = |r: usize, c: usize, k: usize| src[(r * src_w + c) * dim + k];
    let mut out = Vec::with_capacity(dst_h * dst_w * dim);
    for &(y0, y1, fy) in &ys {
        for &(x0, x1, fx) in &xs {
            for k in 0..dim {
                let a = at(y0, x0, k);
                let b = at(y0, x1, k);
                let c = at(y1, x0, k);
                let d = at(y1, x1, k);
                let top = a + fx * (b - a);
                let bottom = c + fx * (d - c);
                out.push(top + fy * (bottom - top));
            }
        }
    }
    out
}
