//! 2D rotary position embedding over a patch grid.
//!
//! The first half of each head vector is rotated by the row coordinate and
//! the second half by the column coordinate. Within a half, adjacent
//! dimensions `(2k, 2k+1)` form a pair rotated by `θ_k · pos` with
//! `θ_k = base^(−2k / (head_dim/2))`.

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PositionIndex {
    pub row: usize,
    pub col: usize,
}

impl PositionIndex {
    pub const fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }
}

/// Row-major enumeration of a `rows × cols` grid.
pub fn position_indices(rows: usize, cols: usize) -> Result<Vec<PositionIndex>> {
    if rows == 0 || cols == 0 {
        return Err(Error::InvalidInput(format!(
            "grid must be at least 1x1, got {rows}x{cols}"
        )));
    }
    Ok((0..rows)
        .flat_map(|row| (0..cols).map(move |col| PositionIndex { row, col }))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RopeConfig {
    head_dim: usize,
    base: f64,
}

impl RopeConfig {
    pub const DEFAULT_BASE: f64 = 10000.0;

    pub fn new(head_dim: usize, base: f64) -> Result<Self> {
        if head_dim == 0 || !head_dim.is_multiple_of(4) {
            return Err(Error::Config(format!(
                "head_dim must be a positive multiple of 4, got {head_dim}"
            )));
        }
        if !(base > 1.0 && base.is_finite()) {
            return Err(Error::Config(format!(
                "rope base must exceed 1, got {base}"
            )));
        }
        Ok(Self { head_dim, base })
    }

    pub fn with_head_dim(head_dim: usize) -> Result<Self> {
        Self::new(head_dim, Self::DEFAULT_BASE)
    }

    pub fn head_dim(&self) -> usize {
        self.head_dim
    }

    pub fn base(&self) -> f64 {
        self.base
    }
}

/// Precomputed inverse frequencies for one [`RopeConfig`].
#[derive(Debug, Clone)]
pub struct Rope2d {
    cfg: RopeConfig,
    inv_freq: Vec<f64>,
}

impl Rope2d {
    pub fn new(cfg: RopeConfig) -> Self {
        let half = cfg.head_dim / 2;
        let inv_freq = (0..half / 2)
            .map(|k| cfg.base.powf(-(2.0 * k as f64) / half as f64))
            .collect();
        Self { cfg, inv_freq }
    }

    pub fn config(&self) -> &RopeConfig {
        &self.cfg
    }

    /// Per-pair angular frequencies `θ_k`.
    pub fn inv_freq(&self) -> &[f64] {
        &self.inv_freq
    }

    pub fn rotate(&self, v: &[f64], pos: PositionIndex) -> Result<Vec<f64>> {
        let mut out = v.to_vec();
        self.rotate_in_place(&mut out, pos)?;
        Ok(out)
    }

    pub fn rotate_in_place(&self, v: &mut [f64], pos: PositionIndex) -> Result<()> {
        if v.len() != self.cfg.head_dim {
            return Err(Error::ShapeMismatch(format!(
                "vector of length {} does not match head_dim {}",
                v.len(),
                self.cfg.head_dim
            )));
        }
        let (row_half, col_half) = v.split_at_mut(self.cfg.head_dim / 2);
        rotate_half(row_half, &self.inv_freq, pos.row as f64);
        rotate_half(col_half, &self.inv_freq, pos.col as f64);
        Ok(())
    }

    /// Rotate every cell of a row-major grid of `head_dim` vectors.
    pub fn rotate_grid(&self, cells: &mut [f64], rows: usize, cols: usize) -> Result<()> {
        let d = self.cfg.head_dim;
        if cells.len() != rows * cols * d {
            return Err(Error::ShapeMismatch(format!(
                "{rows}x{cols} grid of {d}-dim vectors needs {} values, got {}",
                rows * cols * d,
                cells.len()
            )));
        }
        for (i, v) in cells.chunks_exact_mut(d).enumerate() {
            self.rotate_in_place(v, PositionIndex::new(i / cols, i % cols))?;
        }
        Ok(())
    }
}

fn rotate_half(half: &mut [f64], inv_freq: &[f64], pos: f64) {
    if pos == 0.0 {
        return;
    }
    for (pair, &theta) in half.chunks_exact_mut(2).zip(inv_freq) {
        let (sin, cos) = (theta * pos).sin_cos();
        let (x, y) = (pair[0], pair[1]);
        pair[0] = x * cos + y * sin;
        pair[1] = -x * sin + y * cos;
    }
}

/// Rotate `v` to position `pos`.
pub fn rope_rotate(v: &[f64], pos: PositionIndex, cfg: RopeConfig) -> Result<Vec<f64>> {
    Rope2d::new(cfg).rotate(v, pos)
}

/// `⟨rope(u, p), rope(v, q)⟩`, which depends on `p` and `q` only through
/// `p − q`.
pub fn relative_inner_product_check(
    u: &[f64],
    v: &[f64],
    p: PositionIndex,
    q: PositionIndex,
    cfg: RopeConfig,
) -> Result<f64> {
    let rope = Rope2d::new(cfg);
    let a = rope.rotate(u, p)?;
    let b = rope.rotate(v, q)?;
    Ok(a.iter().zip(&b).map(|(x, y)| x * y).sum())
}
