//! Separable orthonormal 3-D transform: multi-level 2-D Haar on each block,
//! then a DCT-II along the stack axis.
//!
//! Both stages are orthonormal, so the composition preserves the Euclidean
//! norm and the inverse is the transpose.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use crate::error::{Error, Result};

fn check_dwt(size: usize, len: usize, levels: usize) -> Result<()> {
    if len != size * size {
        return Err(Error::DimensionMismatch(format!("{len} samples for a {size}x{size} block")));
    }
    if levels >= usize::BITS as usize || size == 0 || !size.is_multiple_of(1usize << levels) {
        return Err(Error::InvalidParameter(format!("block size {size} is not divisible by 2^{levels}")));
    }
    Ok(())
}

/// Number of Haar levels that reduce a `size` block to a single coefficient.
pub fn full_levels(size: usize) -> usize {
    size.trailing_zeros() as usize
}

#[inline]
fn haar_step(input: &[f64], out: &mut [f64]) {
    let half = input.len() / 2;
    for i in 0..half {
        let (a, b) = (input[2 * i], input[2 * i + 1]);
        out[i] = (a + b) * FRAC_1_SQRT_2;
        out[half + i] = (a - b) * FRAC_1_SQRT_2;
    }
}

#[inline]
fn haar_step_inv(input: &[f64], out: &mut [f64]) {
    let half = input.len() / 2;
    for i in 0..half {
        let (s, d) = (input[i], input[half + i]);
        out[2 * i] = (s + d) * FRAC_1_SQRT_2;
        out[2 * i + 1] = (s - d) * FRAC_1_SQRT_2;
    }
}

/// In-place forward Haar on a `size`x`size` block stored row-major.
pub(crate) fn dwt2_forward_in_place(block: &mut [f64], size: usize, levels: usize) {
    let mut line = vec![0.0; size];
    let mut tmp = vec![0.0; size];
    let mut n = size;
    for _ in 0..levels {
        for r in 0..n {
            line[..n].copy_from_slice(&block[r * size..r * size + n]);
            haar_step(&line[..n], &mut tmp[..n]);
            block[r * size..r * size + n].copy_from_slice(&tmp[..n]);
        }
        for c in 0..n {
            for r in 0..n {
                line[r] = block[r * size + c];
            }
            haar_step(&line[..n], &mut tmp[..n]);
            for r in 0..n {
                block[r * size + c] = tmp[r];
            }
        }
        n /= 2;
    }
}

pub(crate) fn dwt2_inverse_in_place(block: &mut [f64], size: usize, levels: usize) {
    let mut line = vec![0.0; size];
    let mut tmp = vec![0.0; size];
    for l in (0..levels).rev() {
        let n = size >> l;
        for c in 0..n {
            for r in 0..n {
                line[r] = block[r * size + c];
            }
            haar_step_inv(&line[..n], &mut tmp[..n]);
            for r in 0..n {
                block[r * size + c] = tmp[r];
            }
        }
        for r in 0..n {
            line[..n].copy_from_slice(&block[r * size..r * size + n]);
            haar_step_inv(&line[..n], &mut tmp[..n]);
            block[r * size..r * size + n].copy_from_slice(&tmp[..n]);
        }
    }
}

/// Orthonormal 2-D Haar analysis of a `size`x`size` block, recursing
/// `levels` times on the low-low band (Mallat layout: the coarsest LL band
/// sits in the top-left corner).
pub fn dwt2_forward(block: &[f64], size: usize, levels: usize) -> Result<Vec<f64>> {
    check_dwt(size, block.len(), levels)?;
    let mut out = block.to_vec();
    dwt2_forward_in_place(&mut out, size, levels);
    Ok(out)
}

pub fn dwt2_inverse(coeffs: &[f64], size: usize, levels: usize) -> Result<Vec<f64>> {
    check_dwt(size, coeffs.len(), levels)?;
    let mut out = coeffs.to_vec();
    dwt2_inverse_in_place(&mut out, size, levels);
    Ok(out)
}

/// Orthonormal DCT-II basis of length `n`, row `k` holds basis vector `k`.
#[derive(Debug, Clone)]
pub(crate) struct DctBasis {
    n: usize,
    m: Vec<f64>,
}

impl DctBasis {
    pub(crate) fn new(n: usize) -> Self {
        let mut m = vec![0.0; n * n];
        for k in 0..n {
            let s = if k == 0 { (1.0 / n as f64).sqrt() } else { (2.0 / n as f64).sqrt() };
            for i in 0..n {
                m[k * n + i] = s * (PI * (2 * i + 1) as f64 * k as f64 / (2 * n) as f64).cos();
            }
        }
        Self { n, m }
    }

    /// `out[k] = sum_i m[k][i] * v[i]`, with `v` read at stride `stride`.
    #[inline]
    fn forward_strided(&self, v: &[f64], stride: usize, offset: usize, out: &mut [f64]) {
        for (o, row) in out.iter_mut().zip(self.m.chunks_exact(self.n)) {
            *o = row.iter().enumerate().map(|(i, b)| b * v[i * stride + offset]).sum();
        }
    }

    #[inline]
    fn inverse_strided(&self, v: &[f64], stride: usize, offset: usize, out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate().take(self.n) {
            *o = (0..self.n).map(|k| self.m[k * self.n + i] * v[k * stride + offset]).sum();
        }
    }
}

pub fn dct1_forward(v: &[f64]) -> Vec<f64> {
    let basis = DctBasis::new(v.len());
    let mut out = vec![0.0; v.len()];
    basis.forward_strided(v, 1, 0, &mut out);
    out
}

pub fn dct1_inverse(coeffs: &[f64]) -> Vec<f64> {
    let basis = DctBasis::new(coeffs.len());
    let mut out = vec![0.0; coeffs.len()];
    basis.inverse_strided(coeffs, 1, 0, &mut out);
    out
}

/// 3-D transform coefficients, `depth` slices of `block_size^2` values.
/// Slice `k` holds DCT frequency `k`; within a slice the layout is the Haar
/// Mallat layout.
#[derive(Debug, Clone, PartialEq)]
pub struct Coeffs3d {
    pub block_size: usize,
    pub levels: usize,
    pub depth: usize,
    pub data: Vec<f64>,
}

impl Coeffs3d {
    /// Side of the coarsest low-low band.
    pub fn lowpass_side(&self) -> usize {
        self.block_size >> self.levels
    }

    /// Whether `index` is an all-lowpass coefficient (coarsest LL band at DCT
    /// frequency 0). With a full Haar decomposition this is the single DC term.
    pub fn is_dc(&self, index: usize) -> bool {
        let area = self.block_size * self.block_size;
        if index >= area {
            return false;
        }
        let (r, c) = (index / self.block_size, index % self.block_size);
        let s = self.lowpass_side();
        r < s && c < s
    }

    pub fn l1_norm(&self) -> f64 {
        self.data.iter().map(|v| v.abs()).sum()
    }
}

/// Reusable transform with cached DCT bases for every stack depth up to `max_depth`.
#[derive(Debug, Clone)]
pub struct Transform3d {
    block_size: usize,
    levels: usize,
    bases: Vec<DctBasis>,
}

impl Transform3d {
    pub fn new(block_size: usize, levels: usize, max_depth: usize) -> Result<Self> {
        check_dwt(block_size, block_size * block_size, levels)?;
        Ok(Self { block_size, levels, bases: (1..=max_depth.max(1)).map(DctBasis::new).collect() })
    }

    pub fn block_size(&self) -> usize {
        self.block_size
    }

    pub fn levels(&self) -> usize {
        self.levels
    }

    fn basis(&self, depth: usize) -> std::borrow::Cow<'_, DctBasis> {
        match self.bases.get(depth.wrapping_sub(1)) {
            Some(b) => std::borrow::Cow::Borrowed(b),
            None => std::borrow::Cow::Owned(DctBasis::new(depth)),
        }
    }

    /// Forward transform of `depth` stacked blocks (`depth * block_size^2` values).
    pub fn forward(&self, stack: &[f64]) -> Result<Coeffs3d> {
        let area = self.block_size * self.block_size;
        if area == 0 || stack.is_empty() || !stack.len().is_multiple_of(area) {
            return Err(Error::DimensionMismatch(format!(
                "stack of {} samples is not a whole number of {}x{} blocks",
                stack.len(),
                self.block_size,
                self.block_size
            )));
        }
        let depth = stack.len() / area;
        let mut planes = stack.to_vec();
        for block in planes.chunks_exact_mut(area) {
            dwt2_forward_in_place(block, self.block_size, self.levels);
        }
        let basis = self.basis(depth);
        let mut data = vec![0.0; stack.len()];
        let mut column = vec![0.0; depth];
        for p in 0..area {
            basis.forward_strided(&planes, area, p, &mut column);
            for k in 0..depth {
                data[k * area + p] = column[k];
            }
        }
        Ok(Coeffs3d { block_size: self.block_size, levels: self.levels, depth, data })
    }

    pub fn inverse(&self, coeffs: &Coeffs3d) -> Result<Vec<f64>> {
        let area = self.block_size * self.block_size;
        if coeffs.block_size != self.block_size
            || coeffs.levels != self.levels
            || coeffs.data.len() != coeffs.depth * area
        {
            return Err(Error::DimensionMismatch("coefficients do not match this transform".into()));
        }
        let depth = coeffs.depth;
        let basis = self.basis(depth);
        let mut out = vec![0.0; coeffs.data.len()];
        let mut column = vec![0.0; depth];
        for p in 0..area {
            basis.inverse_strided(&coeffs.data, area, p, &mut column);
            for k in 0..depth {
                out[k * area + p] = column[k];
            }
        }
        for block in out.chunks_exact_mut(area) {
            dwt2_inverse_in_place(block, self.block_size, self.levels);
        }
        Ok(out)
    }
}

/// Scalar soft threshold `sign(v) * max(|v| - tau, 0)`.
#[inline]
pub fn shrink(v: f64, tau: f64) -> f64 {
    if v > tau {
        v - tau
    } else if v < -tau {
        v + tau
    } else {
        0.0
    }
}

/// Soft-thresholds every coefficient except the all-lowpass ones.
pub fn soft_threshold(coeffs: &Coeffs3d, tau: f64) -> Coeffs3d {
    let mut out = coeffs.clone();
    soft_threshold_in_place(&mut out, tau);
    out
}

pub(crate) fn soft_threshold_in_place(coeffs: &mut Coeffs3d, tau: f64) {
    let area = coeffs.block_size * coeffs.block_size;
    let s = coeffs.lowpass_side();
    for (i, v) in coeffs.data.iter_mut().enumerate() {
        let dc = i < area && (i / coeffs.block_size) < s && (i % coeffs.block_size) < s;
        if !dc {
            *v = shrink(*v, tau);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn haar_constant_2x2() {
        let out = dwt2_forward(&[3.0; 4], 2, 1).unwrap();
        assert!((out[0] - 6.0).abs() < 1e-12);
        assert!(out[1..].iter().all(|v| v.abs() < 1e-12));
    }

    #[test]
    fn haar_constant_full_depth() {
        let out = dwt2_forward(&[2.0; 64], 8, 3).unwrap();
        assert!((out[0] - 16.0).abs() < 1e-12);
        assert!(out[1..].iter().all(|v| v.abs() < 1e-12));
        // two levels leave a 2x2 low band of 4c each
        let out = dwt2_forward(&[2.0; 64], 8, 2).unwrap();
        for i in [0, 1, 8, 9] {
            assert!((out[i] - 8.0).abs() < 1e-12);
        }
    }

    #[test]
    fn haar_rejects_bad_sizes() {
        assert!(dwt2_forward(&[0.0; 36], 6, 2).is_err());
        assert!(dwt2_forward(&[0.0; 10], 3, 0).is_err());
        assert!(dwt2_inverse(&[0.0; 16], 4, 3).is_err());
    }

    #[test]
    fn dct_closed_forms() {
        let out = dct1_forward(&[5.0; 4]);
        assert!((out[0] - 10.0).abs() < 1e-12);
        assert!(out[1..].iter().all(|v| v.abs() < 1e-12));
        assert_eq!(dct1_forward(&[7.5]), vec![7.5]);
        let v = [1.0, -2.0, 0.5, 4.0, 3.0, -1.5, 2.0];
        let c = dct1_forward(&v);
        let e1: f64 = v.iter().map(|x| x * x).sum();
        let e2: f64 = c.iter().map(|x| x * x).sum();
        assert!((e1 - e2).abs() < 1e-10);
        for (a, b) in dct1_inverse(&c).iter().zip(&v) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn dct_matches_direct_sum() {
        let v = [3.0, 1.0, 4.0, 1.0, 5.0];
        let n = v.len() as f64;
        let c = dct1_forward(&v);
        for (k, ck) in c.iter().enumerate() {
            let s = if k == 0 { (1.0 / n).sqrt() } else { (2.0 / n).sqrt() };
            let direct: f64 = v.iter().enumerate().map(|(i, x)| x * (PI * (i as f64 + 0.5) * k as f64 / n).cos()).sum();
            assert!((ck - s * direct).abs() < 1e-12);
        }
    }

    #[test]
    fn constant_stack_has_single_dc() {
        let t = Transform3d::new(8, 3, 16).unwrap();
        for k in [1usize, 5, 16] {
            let c = t.forward(&vec![1.5; 64 * k]).unwrap();
            let dc = 1.5 * 8.0 * (k as f64).sqrt();
            assert!((c.data[0] - dc).abs() < 1e-10);
            assert!(c.data[1..].iter().all(|v| v.abs() < 1e-10));
            assert!(c.is_dc(0) && !c.is_dc(1) && !c.is_dc(64));
        }
    }

    #[test]
    fn shrink_cases() {
        assert_eq!(shrink(3.0, 1.0), 2.0);
        assert_eq!(shrink(-0.5, 1.0), 0.0);
        assert_eq!(shrink(-4.0, 1.5), -2.5);
        assert_eq!(shrink(0.3, 0.0), 0.3);
        let c = Coeffs3d { block_size: 2, levels: 1, depth: 2, data: vec![5.0, 2.0, -3.0, 0.5, 5.0, 1.0, -1.0, 0.0] };
        let s = soft_threshold(&c, 1.0);
        assert_eq!(s.data, vec![5.0, 1.0, -2.0, 0.0, 4.0, 0.0, 0.0, 0.0]);
        assert_eq!(soft_threshold(&c, 0.0), c);
    }

    proptest! {
        #[test]
        fn round_trip_and_parseval(depth in 1usize..17, seed in any::<u64>(), levels in 0usize..4) {
            let mut state = seed | 1;
            let stack: Vec<f64> = (0..64 * depth).map(|_| {
                state ^= state << 13; state ^= state >> 7; state ^= state << 17;
                (state % 10_000) as f64 / 39.0 - 128.0
            }).collect();
            let t = Transform3d::new(8, levels, 16).unwrap();
            let c = t.forward(&stack).unwrap();
            let e1: f64 = stack.iter().map(|x| x * x).sum();
            let e2: f64 = c.data.iter().map(|x| x * x).sum();
            prop_assert!((e1 - e2).abs() <= 1e-10 * e1.max(1.0));
            let back = t.inverse(&c).unwrap();
            for (a, b) in back.iter().zip(&stack) {
                prop_assert!((a - b).abs() <= 1e-10);
            }
        }

        #[test]
        fn shrinkage_is_monotone_in_tau(v in -500.0f64..500.0, t1 in 0.0f64..100.0, dt in 0.0f64..100.0) {
            prop_assert!(shrink(v, t1 + dt).abs() <= shrink(v, t1).abs());
            prop_assert!(shrink(v, t1).abs() <= v.abs());
        }
    }
}
