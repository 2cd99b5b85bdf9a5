//! Nonlocal 3-D sparse model.
//!
//! Similar blocks are grouped around a grid of reference positions, each
//! group is taken to a 3-D transform domain (2-D Haar per block, DCT-II across
//! the group) and the l1 norm of the coefficients is the regularizer. Its
//! approximate proximal map soft-thresholds every group and averages the
//! overlapping reconstructions.

mod matching;
mod transform;

pub use matching::{match_blocks, reference_positions, BlockMatchParams, BlockStack};
pub use transform::{
    dct1_forward, dct1_inverse, dwt2_forward, dwt2_inverse, full_levels, shrink, soft_threshold, Coeffs3d, Transform3d,
};

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::Image;

/// Forward 3-D transform of a matched group.
pub fn transform3d_forward(stack: &BlockStack, levels: usize) -> Result<Coeffs3d> {
    Transform3d::new(stack.block_size, levels, stack.depth())?.forward(&stack.data)
}

/// Inverse of [`transform3d_forward`]; returns the stacked block pixels.
pub fn transform3d_inverse(coeffs: &Coeffs3d) -> Result<Vec<f64>> {
    Transform3d::new(coeffs.block_size, coeffs.levels, coeffs.depth)?.inverse(coeffs)
}

fn reference_grid(img: &Image, params: &BlockMatchParams) -> Vec<(usize, usize)> {
    let rows = reference_positions(img.height(), params.block_size, params.stride);
    let cols = reference_positions(img.width(), params.block_size, params.stride);
    rows.iter().flat_map(|&r| cols.iter().map(move |&c| (r, c))).collect()
}

/// `sum_q || T3d(Z_q) ||_1` over the reference grid.
pub fn nonlocal_energy(img: &Image, params: &BlockMatchParams) -> Result<f64> {
    params.validate()?;
    let transform = Transform3d::new(params.block_size, params.levels, params.max_group)?;
    let refs = reference_grid(img, params);
    let norms: Vec<f64> = refs
        .par_iter()
        .map(|&q| {
            let stack = match_blocks(img, q, params)?;
            Ok(transform.forward(&stack.data)?.l1_norm())
        })
        .collect::<Result<_>>()?;
    // summed in raster order so the result does not depend on scheduling
    Ok(norms.iter().sum())
}

/// One filtered group ready for aggregation.
struct FilteredGroup {
    member_pos: Vec<(usize, usize)>,
    blocks: Vec<f64>,
}

fn filter_group(
    c: &Image,
    q: (usize, usize),
    tau: f64,
    transform: &Transform3d,
    params: &BlockMatchParams,
) -> Result<FilteredGroup> {
    let stack = match_blocks(c, q, params)?;
    let mut coeffs = transform.forward(&stack.data)?;
    transform::soft_threshold_in_place(&mut coeffs, tau);
    let blocks = transform.inverse(&coeffs)?;
    Ok(FilteredGroup { member_pos: stack.member_pos, blocks })
}

/// Number of reference rows filtered before their groups are aggregated;
/// bounds the memory held by in-flight groups.
const REF_ROWS_PER_BATCH: usize = 8;

/// Approximate proximal map of `gamma * Psi` under `beta * ||c - h||^2`:
/// collaborative soft thresholding with `tau = gamma / (2 beta)`, overlapping
/// estimates averaged per pixel. Pixels no group touches keep their value
/// from `c`.
pub fn solve_h_subproblem(c: &Image, beta: f64, gamma: f64, params: &BlockMatchParams) -> Result<Image> {
    if !(beta > 0.0) {
        return Err(Error::InvalidParameter(format!("beta = {beta} must be positive")));
    }
    if !(gamma >= 0.0) {
        return Err(Error::InvalidParameter(format!("gamma = {gamma} must be nonnegative")));
    }
    params.validate()?;
    let tau = gamma / (2.0 * beta);
    let transform = Transform3d::new(params.block_size, params.levels, params.max_group)?;
    let b = params.block_size;
    let w = c.width();
    let mut acc = vec![0.0; c.len()];
    let mut count = vec![0u32; c.len()];

    let rows = reference_positions(c.height(), b, params.stride);
    let cols = reference_positions(c.width(), b, params.stride);
    for row_batch in rows.chunks(REF_ROWS_PER_BATCH) {
        let refs: Vec<(usize, usize)> = row_batch.iter().flat_map(|&r| cols.iter().map(move |&cc| (r, cc))).collect();
        let groups: Vec<FilteredGroup> =
            refs.par_iter().map(|&q| filter_group(c, q, tau, &transform, params)).collect::<Result<_>>()?;
        // sequential aggregation in raster order of the references
        for g in &groups {
            for (m, &(pr, pc)) in g.member_pos.iter().enumerate() {
                let block = &g.blocks[m * b * b..(m + 1) * b * b];
                for r in 0..b {
                    let base = (pr + r) * w + pc;
                    for (k, v) in block[r * b..(r + 1) * b].iter().enumerate() {
                        acc[base + k] += v;
                        count[base + k] += 1;
                    }
                }
            }
        }
    }

    let data = c
        .data()
        .iter()
        .zip(acc.iter().zip(&count))
        .map(|(&orig, (&s, &n))| if n > 0 { s / n as f64 } else { orig })
        .collect();
    Image::new(c.width(), c.height(), data)
}
