//! Block matching: grouping blocks similar to a reference block.

use crate::error::{Error, Result};
use crate::image::Image;

use super::transform::full_levels;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockMatchParams {
    /// Side of the square blocks; a power of two.
    pub block_size: usize,
    /// Haar levels of the 2-D transform.
    pub levels: usize,
    /// Half-width of the square search window around the reference.
    pub search_radius: usize,
    /// Maximum group size, reference included.
    pub max_group: usize,
    /// Mean-squared-difference threshold for a block to join the group.
    pub epsilon: f64,
    /// Spacing of the reference block grid.
    pub stride: usize,
}

impl Default for BlockMatchParams {
    fn default() -> Self {
        Self { block_size: 4, levels: 1, search_radius: 16, max_group: 16, epsilon: 400.0, stride: 4 }
    }
}

impl BlockMatchParams {
    pub fn validate(&self) -> Result<()> {
        let b = self.block_size;
        if b < 2 || !b.is_power_of_two() {
            return Err(Error::InvalidParameter(format!("block size {b} must be a power of two >= 2")));
        }
        if self.levels > full_levels(b) {
            return Err(Error::InvalidParameter(format!("{} Haar levels exceed block size {b}", self.levels)));
        }
        if self.max_group == 0 || self.stride == 0 {
            return Err(Error::InvalidParameter("max_group and stride must be at least 1".into()));
        }
        if self.epsilon.is_nan() || self.epsilon < 0.0 {
            return Err(Error::InvalidParameter(format!("epsilon {} must be nonnegative", self.epsilon)));
        }
        Ok(())
    }
}

/// A matched group: positions (top-left corners, `(row, col)`) and stacked pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockStack {
    pub ref_pos: (usize, usize),
    /// Reference first, then by nondecreasing distance.
    pub member_pos: Vec<(usize, usize)>,
    /// Mean squared difference of each member to the reference.
    pub distances: Vec<f64>,
    pub block_size: usize,
    /// `member_pos.len()` blocks of `block_size^2` pixels, row-major.
    pub data: Vec<f64>,
}

impl BlockStack {
    pub fn depth(&self) -> usize {
        self.member_pos.len()
    }
}

/// Reference coordinates along one axis: `0, stride, 2*stride, ...` plus the
/// last valid position so the far border is covered.
pub fn reference_positions(len: usize, block: usize, stride: usize) -> Vec<usize> {
    if len < block {
        return Vec::new();
    }
    let last = len - block;
    let mut out: Vec<usize> = (0..=last).step_by(stride.max(1)).collect();
    if out.last() != Some(&last) {
        out.push(last);
    }
    out
}

/// Sum of squared differences, abandoning once it exceeds `bound`.
#[inline]
fn block_ssd(img: &Image, a: (usize, usize), b: (usize, usize), size: usize, bound: f64) -> Option<f64> {
    let w = img.width();
    let data = img.data();
    let mut acc = 0.0;
    for r in 0..size {
        let ra = &data[(a.0 + r) * w + a.1..(a.0 + r) * w + a.1 + size];
        let rb = &data[(b.0 + r) * w + b.1..(b.0 + r) * w + b.1 + size];
        for (x, y) in ra.iter().zip(rb) {
            acc += (x - y) * (x - y);
        }
        if acc > bound {
            return None;
        }
    }
    Some(acc)
}

pub(crate) fn copy_block(img: &Image, pos: (usize, usize), size: usize, out: &mut Vec<f64>) {
    let w = img.width();
    for r in 0..size {
        let start = (pos.0 + r) * w + pos.1;
        out.extend_from_slice(&img.data()[start..start + size]);
    }
}

/// Collects up to `max_group` blocks within `search_radius` of `ref_pos`
/// whose mean squared difference to the reference is at most `epsilon`.
/// Candidates must lie fully inside the image. Ties keep raster order.
pub fn match_blocks(img: &Image, ref_pos: (usize, usize), params: &BlockMatchParams) -> Result<BlockStack> {
    params.validate()?;
    let b = params.block_size;
    if ref_pos.0 + b > img.height() || ref_pos.1 + b > img.width() {
        return Err(Error::InvalidParameter(format!(
            "reference block at {ref_pos:?} does not fit in {}x{}",
            img.width(),
            img.height()
        )));
    }
    let area = (b * b) as f64;
    let threshold = params.epsilon * area;
    let keep = params.max_group - 1;

    // (ssd, row, col), sorted; insertion after equal keys preserves raster order
    let mut best: Vec<(f64, usize, usize)> = Vec::with_capacity(keep + 1);
    if keep > 0 {
        let r_lo = ref_pos.0.saturating_sub(params.search_radius);
        let r_hi = (ref_pos.0 + params.search_radius).min(img.height() - b);
        let c_lo = ref_pos.1.saturating_sub(params.search_radius);
        let c_hi = (ref_pos.1 + params.search_radius).min(img.width() - b);
        for r in r_lo..=r_hi {
            for c in c_lo..=c_hi {
                if (r, c) == ref_pos {
                    continue;
                }
                let bound = if best.len() == keep { best[keep - 1].0.min(threshold) } else { threshold };
                let Some(d) = block_ssd(img, ref_pos, (r, c), b, bound) else {
                    continue;
                };
                if best.len() == keep && d >= best[keep - 1].0 {
                    continue;
                }
                let at = best.partition_point(|e| e.0 <= d);
                best.insert(at, (d, r, c));
                best.truncate(keep);
            }
        }
    }

    let mut member_pos = Vec::with_capacity(best.len() + 1);
    let mut distances = Vec::with_capacity(best.len() + 1);
    member_pos.push(ref_pos);
    distances.push(0.0);
    for &(d, r, c) in &best {
        member_pos.push((r, c));
        distances.push(d / area);
    }
    let mut data = Vec::with_capacity(member_pos.len() * b * b);
    for &p in &member_pos {
        copy_block(img, p, b, &mut data);
    }
    Ok(BlockStack { ref_pos, member_pos, distances, block_size: b, data })
}
