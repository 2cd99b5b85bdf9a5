//! Weighted local autoregressive (AR) model.
//!
//! A pixel is predicted as a linear combination of a fixed neighbor layout,
//! with coefficients shared inside a training window. The weighted fit
//! predicts every layout neighbor `k` of each window pixel `i` from that
//! neighbor's own layout neighbors, weighting the equation by the patch
//! similarity `theta(i, k)` between the patches centered at `i` and at
//! `i + offset_k`.
//!
//! The unweighted least-squares fit ([`fit_ar_pinv_baseline`]) is the
//! conventional AR estimator and doubles as a cross-check for the weighted
//! one.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::{Image, Padded, Rect};

/// Ordered set of neighbor displacements `(d_row, d_col)`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct NeighborLayout {
    offsets: Vec<(isize, isize)>,
}

impl NeighborLayout {
    pub fn new(offsets: Vec<(isize, isize)>) -> Result<Self> {
        if offsets.is_empty() {
            return Err(Error::InvalidParameter("empty neighbor layout".into()));
        }
        if offsets.contains(&(0, 0)) {
            return Err(Error::InvalidParameter("layout contains the (0,0) offset".into()));
        }
        for (i, o) in offsets.iter().enumerate() {
            if offsets[..i].contains(o) {
                return Err(Error::InvalidParameter(format!("duplicate layout offset {o:?}")));
            }
        }
        Ok(Self { offsets })
    }

    /// The four diagonal neighbors in raster order.
    pub fn diagonal4() -> Self {
        Self { offsets: vec![(-1, -1), (-1, 1), (1, -1), (1, 1)] }
    }

    /// The four axis neighbors in raster order.
    pub fn axial4() -> Self {
        Self { offsets: vec![(-1, 0), (0, -1), (0, 1), (1, 0)] }
    }

    /// All eight neighbors of the 3x3 ring in raster order.
    pub fn ring8() -> Self {
        Self { offsets: vec![(-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1)] }
    }

    pub fn order(&self) -> usize {
        self.offsets.len()
    }

    pub fn offsets(&self) -> &[(isize, isize)] {
        &self.offsets
    }

    /// Largest absolute displacement along either axis.
    pub fn reach(&self) -> usize {
        self.offsets.iter().map(|&(r, c)| r.unsigned_abs().max(c.unsigned_abs())).max().unwrap_or(0)
    }
}

impl Default for NeighborLayout {
    fn default() -> Self {
        Self::diagonal4()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchWeightParams {
    patch_size: usize,
    mu: f64,
}

impl PatchWeightParams {
    pub fn new(patch_size: usize, mu: f64) -> Result<Self> {
        if patch_size < 3 || patch_size.is_multiple_of(2) {
            return Err(Error::InvalidParameter(format!("patch size {patch_size} must be odd and at least 3")));
        }
        if !(mu > 0.0) || !mu.is_finite() {
            return Err(Error::InvalidParameter(format!("patch decay mu = {mu} must be positive")));
        }
        Ok(Self { patch_size, mu })
    }

    pub fn patch_size(&self) -> usize {
        self.patch_size
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }

    fn radius(&self) -> isize {
        (self.patch_size / 2) as isize
    }
}

impl Default for PatchWeightParams {
    fn default() -> Self {
        Self { patch_size: 5, mu: 0.008 }
    }
}

/// Ridge term added to the weighted normal equations.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Ridge {
    /// `rho * ||w||^2` with `rho` taken as is.
    Absolute(f64),
    /// `rho` is multiplied by `trace(A^T Theta A) / n`, making it invariant to
    /// the intensity scale and the window size. A window whose design matrix
    /// is identically zero gets the minimum-norm answer `w = 0`.
    TraceScaled(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ARModel {
    pub layout: NeighborLayout,
    pub w: Vec<f64>,
    /// Attained (weighted) squared prediction error of the fit.
    pub residual_energy: f64,
    /// Ratio of extreme singular values of the design matrix, when computed.
    pub condition_number: Option<f64>,
}

/// Softmin of patch distances: `exp(-mu * d_k) / sum_j exp(-mu * d_j)`.
pub fn similarity_weights(distances: &[f64], mu: f64) -> Vec<f64> {
    // shifting by the minimum leaves the ratios unchanged and avoids underflow
    let dmin = distances.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w: Vec<f64> = distances.iter().map(|d| (-mu * (d - dmin)).exp()).collect();
    let z: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= z);
    w
}

fn patch_distance(src: &Padded, center: (isize, isize), offset: (isize, isize), radius: isize) -> f64 {
    let (r0, c0) = center;
    let mut acc = 0.0;
    for dr in -radius..=radius {
        for dc in -radius..=radius {
            let a = src.get(r0 + dr, c0 + dc);
            let b = src.get(r0 + offset.0 + dr, c0 + offset.1 + dc);
            acc += (a - b) * (a - b);
        }
    }
    let side = (2 * radius + 1) as f64;
    acc / (side * side)
}

/// Patch-similarity weights `theta(center, k)` for every layout neighbor.
/// Patch distances are mean squared differences; borders are reflected.
pub fn patch_weights(
    img: &Image,
    center: (usize, usize),
    layout: &NeighborLayout,
    params: &PatchWeightParams,
) -> Vec<f64> {
    let src = Padded::new(img, params.patch_size / 2 + layout.reach());
    weights_at(&src, (center.0 as isize, center.1 as isize), layout, params)
}

fn weights_at(src: &Padded, center: (isize, isize), layout: &NeighborLayout, params: &PatchWeightParams) -> Vec<f64> {
    let d: Vec<f64> = layout.offsets().iter().map(|&o| patch_distance(src, center, o, params.radius())).collect();
    similarity_weights(&d, params.mu)
}

/// `theta` for every pixel of an image, `order` values per pixel in raster order.
#[derive(Debug, Clone)]
pub struct WeightField {
    width: usize,
    order: usize,
    data: Vec<f64>,
}

impl WeightField {
    pub fn compute(img: &Image, layout: &NeighborLayout, params: &PatchWeightParams) -> Self {
        let src = Padded::new(img, params.patch_size / 2 + layout.reach());
        let n = layout.order();
        let w = img.width();
        let mut data = vec![0.0; img.len() * n];
        data.par_chunks_mut(w * n).enumerate().for_each(|(r, row)| {
            for c in 0..w {
                let theta = weights_at(&src, (r as isize, c as isize), layout, params);
                row[c * n..(c + 1) * n].copy_from_slice(&theta);
            }
        });
        Self { width: w, order: n, data }
    }

    /// Equal weights `1/n` everywhere.
    pub fn uniform(img: &Image, layout: &NeighborLayout) -> Self {
        let n = layout.order();
        Self { width: img.width(), order: n, data: vec![1.0 / n as f64; img.len() * n] }
    }

    #[inline]
    pub fn at(&self, row: usize, col: usize) -> &[f64] {
        let i = (row * self.width + col) * self.order;
        &self.data[i..i + self.order]
    }
}

/// Padding margin that covers a neighbor-of-neighbor lookup.
fn design_margin(layout: &NeighborLayout) -> usize {
    2 * layout.reach()
}

/// Accumulates `A^T Theta A`, `A^T Theta b` and `b^T Theta b` over a window.
fn normal_equations(
    src: &Padded,
    window: Rect,
    layout: &NeighborLayout,
    theta: &WeightField,
) -> (DMatrix<f64>, DVector<f64>, f64) {
    let n = layout.order();
    let offsets = layout.offsets();
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut rhs = DVector::<f64>::zeros(n);
    let mut btb = 0.0;
    let mut a = vec![0.0; n];
    for (r, c) in window.pixels() {
        let weights = theta.at(r, c);
        for (k, &(kr, kc)) in offsets.iter().enumerate() {
            let (nr, nc) = (r as isize + kr, c as isize + kc);
            let target = src.get(nr, nc);
            for (j, &(jr, jc)) in offsets.iter().enumerate() {
                a[j] = src.get(nr + jr, nc + jc);
            }
            let wk = weights[k];
            for p in 0..n {
                let wa = wk * a[p];
                rhs[p] += wa * target;
                for q in p..n {
                    m[(p, q)] += wa * a[q];
                }
            }
            btb += wk * target * target;
        }
    }
    for p in 0..n {
        for q in 0..p {
            m[(p, q)] = m[(q, p)];
        }
    }
    (m, rhs, btb)
}

fn weighted_loss(src: &Padded, window: Rect, layout: &NeighborLayout, theta: &WeightField, w: &[f64]) -> f64 {
    let offsets = layout.offsets();
    let mut loss = 0.0;
    for (r, c) in window.pixels() {
        let weights = theta.at(r, c);
        for (k, &(kr, kc)) in offsets.iter().enumerate() {
            let (nr, nc) = (r as isize + kr, c as isize + kc);
            let pred: f64 = offsets.iter().zip(w).map(|(&(jr, jc), wj)| wj * src.get(nr + jr, nc + jc)).sum();
            let e = src.get(nr, nc) - pred;
            loss += weights[k] * e * e;
        }
    }
    loss
}

fn check_window(img: &Image, window: Rect) -> Result<()> {
    if window.area() == 0 || window.row + window.height > img.height() || window.col + window.width > img.width() {
        return Err(Error::OutOfBounds { rect: window, width: img.width(), height: img.height() });
    }
    Ok(())
}

/// Weighted least-squares AR fit over `window` with precomputed weights.
pub fn fit_ar_wls_with_weights(
    img: &Image,
    window: Rect,
    layout: &NeighborLayout,
    theta: &WeightField,
    ridge: Ridge,
) -> Result<ARModel> {
    check_window(img, window)?;
    let src = Padded::new(img, design_margin(layout));
    fit_on_padded(&src, window, layout, theta, ridge)
}

fn fit_on_padded(
    src: &Padded,
    window: Rect,
    layout: &NeighborLayout,
    theta: &WeightField,
    ridge: Ridge,
) -> Result<ARModel> {
    let n = layout.order();
    let (mut m, rhs, _) = normal_equations(src, window, layout, theta);
    let rho = match ridge {
        Ridge::Absolute(rho) => rho,
        Ridge::TraceScaled(rho) => rho * m.trace() / n as f64,
    };
    if matches!(ridge, Ridge::TraceScaled(_)) && m.trace() == 0.0 {
        return Ok(ARModel { layout: layout.clone(), w: vec![0.0; n], residual_energy: 0.0, condition_number: None });
    }
    if !(rho >= 0.0) {
        return Err(Error::InvalidParameter(format!("ridge {rho} must be nonnegative")));
    }
    for i in 0..n {
        m[(i, i)] += rho;
    }
    let chol = m.clone().cholesky().ok_or(Error::SingularSystem { window })?;
    let w = chol.solve(&rhs);
    let resid = (&m * &w - &rhs).norm();
    let scale = rhs.norm() + m.norm() * w.norm();
    if !w.iter().all(|v| v.is_finite()) || resid > 1e-8 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::SingularSystem { window });
    }
    let w: Vec<f64> = w.iter().copied().collect();
    let residual_energy = weighted_loss(src, window, layout, theta, &w);
    Ok(ARModel { layout: layout.clone(), w, residual_energy, condition_number: None })
}

/// Weighted least-squares AR fit with an absolute ridge `ridge * ||w||^2`.
/// Patch weights are computed from `img` itself.
pub fn fit_ar_wls(
    img: &Image,
    window: Rect,
    layout: &NeighborLayout,
    params: &PatchWeightParams,
    ridge: f64,
) -> Result<ARModel> {
    let theta = WeightField::compute(img, layout, params);
    fit_ar_wls_with_weights(img, window, layout, &theta, Ridge::Absolute(ridge))
}

/// AR prediction `sum_j w_j * img(i + offset_j)` for each pixel of `window`,
/// in raster order.
pub fn predict_ar(img: &Image, model: &ARModel, window: Rect) -> Vec<f64> {
    let offsets = model.layout.offsets();
    window
        .pixels()
        .map(|(r, c)| {
            offsets
                .iter()
                .zip(&model.w)
                .map(|(&(dr, dc), w)| w * img.get_reflect(r as isize + dr, c as isize + dc))
                .sum()
        })
        .collect()
}

/// Conventional unweighted AR fit `w = A^+ x` on the pixels of `lr_window`
/// whose neighbors all lie inside it. Rank deficiency yields the
/// minimum-norm solution; the condition number is reported.
pub fn fit_ar_pinv_baseline(lr_window: &Image, layout: &NeighborLayout) -> Result<ARModel> {
    let n = layout.order();
    let reach = layout.reach();
    let (w, h) = (lr_window.width(), lr_window.height());
    let mut rows = Vec::new();
    let mut targets = Vec::new();
    if w > 2 * reach && h > 2 * reach {
        for r in reach..h - reach {
            for c in reach..w - reach {
                for &(dr, dc) in layout.offsets() {
                    rows.push(lr_window.get((r as isize + dr) as usize, (c as isize + dc) as usize));
                }
                targets.push(lr_window.get(r, c));
            }
        }
    }
    let m = targets.len();
    if m < n {
        return Err(Error::InsufficientEquations { available: m, required: n });
    }
    let a = DMatrix::from_row_slice(m, n, &rows);
    let b = DVector::from_vec(targets);
    let svd = a.clone().svd(true, true);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    let eps = smax * m.max(n) as f64 * f64::EPSILON;
    let coef = svd.solve(&b, eps).map_err(|e| Error::InvalidParameter(e.to_string()))?;
    let residual_energy = (&a * &coef - &b).norm_squared();
    Ok(ARModel {
        layout: layout.clone(),
        w: coef.iter().copied().collect(),
        residual_energy,
        condition_number: Some(if smin > 0.0 { smax / smin } else { f64::INFINITY }),
    })
}

/// Total weighted AR residual energy over a window tiling.
pub fn local_ar_energy(img: &Image, models: &[(Rect, ARModel)], params: &PatchWeightParams) -> f64 {
    let Some((_, first)) = models.first() else {
        return 0.0;
    };
    let theta = WeightField::compute(img, &first.layout, params);
    local_ar_energy_with_weights(img, models, &theta)
}

pub(crate) fn local_ar_energy_with_weights(img: &Image, models: &[(Rect, ARModel)], theta: &WeightField) -> f64 {
    let margin = models.iter().map(|(_, m)| design_margin(&m.layout)).max().unwrap_or(0);
    let src = Padded::new(img, margin);
    models.iter().map(|(rect, model)| weighted_loss(&src, *rect, &model.layout, theta, &model.w)).sum()
}

/// Non-overlapping tiling of a `width`x`height` grid into `size`x`size`
/// windows; the last row/column of tiles is truncated at the border.
pub fn tile_windows(width: usize, height: usize, size: usize) -> Vec<Rect> {
    let size = size.max(1);
    let mut out = Vec::new();
    for r in (0..height).step_by(size) {
        for c in (0..width).step_by(size) {
            out.push(Rect::new(r, c, size.min(height - r), size.min(width - c)));
        }
    }
    out
}

/// Fits one model per window (in parallel) and returns them in window order.
pub fn fit_tiles(
    img: &Image,
    windows: &[Rect],
    layout: &NeighborLayout,
    theta: &WeightField,
    ridge: Ridge,
) -> Result<Vec<(Rect, ARModel)>> {
    let src = Padded::new(img, design_margin(layout));
    windows.par_iter().map(|&win| fit_on_padded(&src, win, layout, theta, ridge).map(|m| (win, m))).collect()
}
