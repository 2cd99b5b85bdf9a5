//! The weighted AR energy of a whole image as a quadratic form in the pixels.
//!
//! With coefficients and weights held fixed,
//! `Phi(g) = sum_(p,k) theta(p,k) (g(p + o_k) - sum_j w_j g(p + o_k + o_j))^2`
//! is `|| Theta^(1/2) A g ||^2` for a sparse `A`. [`ArSystem::prox`] minimizes
//! `lambda Phi(g) + alpha/2 ||g - z||^2` over a set of free pixels by
//! conjugate gradients. Borders are reflected exactly as in the fit, and
//! every reduction runs in a fixed order, so results do not depend on threads.

use crate::ar::{ARModel, NeighborLayout, WeightField};
use crate::error::{Error, Result};
use crate::image::{ensure_same_size, reflect_index, Image, Rect};

const NO_MODEL: u32 = u32::MAX;

#[derive(Debug, Clone)]
pub struct ArSystem {
    width: usize,
    height: usize,
    layout: NeighborLayout,
    /// Window index of each pixel, `NO_MODEL` when no window covers it.
    model_of: Vec<u32>,
}

/// Outcome of a conjugate-gradient solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CgReport {
    pub iterations: usize,
    /// Final residual norm relative to the initial one.
    pub relative_residual: f64,
}

impl ArSystem {
    /// `windows` must not overlap; pixels outside all windows contribute no equations.
    pub fn new(width: usize, height: usize, layout: &NeighborLayout, windows: &[Rect]) -> Result<Self> {
        let mut model_of = vec![NO_MODEL; width * height];
        for (i, win) in windows.iter().enumerate() {
            if win.row + win.height > height || win.col + win.width > width {
                return Err(Error::OutOfBounds { rect: *win, width, height });
            }
            for (r, c) in win.pixels() {
                let slot = &mut model_of[r * width + c];
                if *slot != NO_MODEL {
                    return Err(Error::InvalidParameter(format!("windows overlap at ({r}, {c})")));
                }
                *slot = i as u32;
            }
        }
        Ok(Self { width, height, layout: layout.clone(), model_of })
    }

    fn check(&self, img: &Image, models: &[ARModel]) -> Result<()> {
        if img.width() != self.width || img.height() != self.height {
            return Err(Error::DimensionMismatch(format!(
                "image is {}x{}, system is {}x{}",
                img.width(),
                img.height(),
                self.width,
                self.height
            )));
        }
        if models.iter().any(|m| m.layout != self.layout) {
            return Err(Error::InvalidParameter("model layout differs from the system layout".into()));
        }
        Ok(())
    }

    #[inline]
    fn index(&self, r: isize, c: isize) -> usize {
        reflect_index(r, self.height) * self.width + reflect_index(c, self.width)
    }

    /// Visits every equation as `(theta, w, target index, neighbor indices)`.
    fn for_each_equation(
        &self,
        models: &[ARModel],
        theta: &WeightField,
        mut f: impl FnMut(f64, &[f64], usize, &[usize]),
    ) {
        let offsets = self.layout.offsets();
        let mut nbr = vec![0usize; offsets.len()];
        for r in 0..self.height {
            for c in 0..self.width {
                let m = self.model_of[r * self.width + c];
                if m == NO_MODEL {
                    continue;
                }
                let w = &models[m as usize].w;
                for (&t, &(kr, kc)) in theta.at(r, c).iter().zip(offsets) {
                    let (qr, qc) = (r as isize + kr, c as isize + kc);
                    for (slot, &(jr, jc)) in nbr.iter_mut().zip(offsets) {
                        *slot = self.index(qr + jr, qc + jc);
                    }
                    f(t, w, self.index(qr, qc), &nbr);
                }
            }
        }
    }

    /// `Phi(g)`.
    pub fn energy(&self, g: &Image, models: &[ARModel], theta: &WeightField) -> Result<f64> {
        self.check(g, models)?;
        let x = g.data();
        let mut total = 0.0;
        self.for_each_equation(models, theta, |t, w, target, nbr| {
            let e = x[target] - w.iter().zip(nbr).map(|(wj, &j)| wj * x[j]).sum::<f64>();
            total += t * e * e;
        });
        Ok(total)
    }

    /// `out = A^T Theta A g`, half the gradient of `Phi`.
    fn apply_normal(&self, g: &[f64], models: &[ARModel], theta: &WeightField, out: &mut [f64]) {
        out.iter_mut().for_each(|v| *v = 0.0);
        self.for_each_equation(models, theta, |t, w, target, nbr| {
            let e = g[target] - w.iter().zip(nbr).map(|(wj, &j)| wj * g[j]).sum::<f64>();
            let s = t * e;
            out[target] += s;
            for (wj, &j) in w.iter().zip(nbr) {
                out[j] -= s * wj;
            }
        });
    }

    /// Gradient of `Phi` at `g`.
    pub fn gradient(&self, g: &Image, models: &[ARModel], theta: &WeightField) -> Result<Image> {
        self.check(g, models)?;
        let mut out = vec![0.0; g.len()];
        self.apply_normal(g.data(), models, theta, &mut out);
        out.iter_mut().for_each(|v| *v *= 2.0);
        Image::new(self.width, self.height, out)
    }

    /// Minimizes `lambda Phi(g) + alpha/2 ||g - z||^2` over the pixels where
    /// `free` is true. Other pixels keep their value from `start`, which also
    /// seeds the free pixels. Stops after `max_iters` steps or once the
    /// residual has dropped by `tol`.
    #[allow(clippy::too_many_arguments)]
    pub fn prox(
        &self,
        z: &Image,
        start: &Image,
        free: &[bool],
        models: &[ARModel],
        theta: &WeightField,
        lambda: f64,
        alpha: f64,
        max_iters: usize,
        tol: f64,
    ) -> Result<(Image, CgReport)> {
        self.check(z, models)?;
        ensure_same_size(z, start)?;
        if free.len() != z.len() {
            return Err(Error::DimensionMismatch(format!("mask has {} entries for {} pixels", free.len(), z.len())));
        }
        if !(alpha > 0.0) || !(lambda >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "prox needs alpha > 0 and lambda >= 0, got {alpha}, {lambda}"
            )));
        }
        let n = z.len();
        let mut g = start.data().to_vec();
        let mut scratch = vec![0.0; n];
        let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();

        // r = -(gradient of the objective) on free pixels
        self.apply_normal(&g, models, theta, &mut scratch);
        let mut r: Vec<f64> = (0..n)
            .map(|i| if free[i] { alpha * (z.data()[i] - g[i]) - 2.0 * lambda * scratch[i] } else { 0.0 })
            .collect();
        let mut p = r.clone();
        let mut rr = dot(&r, &r);
        let r0 = rr.sqrt();
        let mut report = CgReport { iterations: 0, relative_residual: if r0 > 0.0 { 1.0 } else { 0.0 } };
        while report.iterations < max_iters && rr.sqrt() > tol * r0 {
            self.apply_normal(&p, models, theta, &mut scratch);
            for i in 0..n {
                scratch[i] = if free[i] { alpha * p[i] + 2.0 * lambda * scratch[i] } else { 0.0 };
            }
            let step = rr / dot(&p, &scratch);
            for i in 0..n {
                g[i] += step * p[i];
                r[i] -= step * scratch[i];
            }
            let rr_next = dot(&r, &r);
            let ratio = rr_next / rr;
            for i in 0..n {
                p[i] = r[i] + ratio * p[i];
            }
            rr = rr_next;
            report.iterations += 1;
            report.relative_residual = rr.sqrt() / r0;
        }
        Ok((Image::new(self.width, self.height, g)?, report))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ar::{fit_tiles, local_ar_energy, tile_windows, PatchWeightParams, Ridge};
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(seed: u64, w: usize, h: usize) -> Image {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Image::from_fn(w, h, |_, _| rng.random_range(0.0..255.0)).unwrap()
    }

    fn fitted(img: &Image, layout: &NeighborLayout, size: usize) -> (Vec<Rect>, Vec<ARModel>, WeightField) {
        let theta = WeightField::compute(img, layout, &PatchWeightParams::default());
        let windows = tile_windows(img.width(), img.height(), size);
        let models = fit_tiles(img, &windows, layout, &theta, Ridge::TraceScaled(1e-6)).unwrap();
        (windows, models.into_iter().map(|(_, m)| m).collect(), theta)
    }

    #[test]
    fn energy_matches_windowed_sum() {
        let img = random_image(3, 11, 9);
        for layout in [NeighborLayout::diagonal4(), NeighborLayout::ring8()] {
            let (windows, models, theta) = fitted(&img, &layout, 4);
            let sys = ArSystem::new(11, 9, &layout, &windows).unwrap();
            let pairs: Vec<_> = windows.iter().copied().zip(models.iter().cloned()).collect();
            let expect = local_ar_energy(&img, &pairs, &PatchWeightParams::default());
            let got = sys.energy(&img, &models, &theta).unwrap();
            assert!((got - expect).abs() <= 1e-9 * expect, "{got} vs {expect}");
        }
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let img = random_image(4, 7, 6);
        let layout = NeighborLayout::ring8();
        let (windows, models, theta) = fitted(&img, &layout, 3);
        let sys = ArSystem::new(7, 6, &layout, &windows).unwrap();
        let grad = sys.gradient(&img, &models, &theta).unwrap();
        // Phi is quadratic, so the central difference is exact up to rounding
        for i in [0, 5, 17, 41] {
            let mut plus = img.data().to_vec();
            let mut minus = img.data().to_vec();
            plus[i] += 0.5;
            minus[i] -= 0.5;
            let fp = sys.energy(&Image::new(7, 6, plus).unwrap(), &models, &theta).unwrap();
            let fm = sys.energy(&Image::new(7, 6, minus).unwrap(), &models, &theta).unwrap();
            assert!((fp - fm - grad.data()[i]).abs() < 1e-6 * (1.0 + grad.data()[i].abs()));
        }
    }

    #[test]
    fn prox_matches_dense_solve() {
        let (w, h) = (6, 6);
        let img = random_image(5, w, h);
        let z = random_image(6, w, h);
        let layout = NeighborLayout::diagonal4();
        let (windows, models, theta) = fitted(&img, &layout, 3);
        let sys = ArSystem::new(w, h, &layout, &windows).unwrap();
        let free: Vec<bool> = (0..w * h).map(|i| (i / w) % 2 == 1 || (i % w) % 2 == 1).collect();
        let (lambda, alpha) = (0.7, 0.3);
        let (g, report) = sys.prox(&z, &img, &free, &models, &theta, lambda, alpha, 500, 1e-14).unwrap();
        assert!(report.relative_residual <= 1e-14 || report.iterations == 500);

        // dense Hessian of the objective, built column by column from the energy's gradient
        let n = w * h;
        let mut hess = DMatrix::<f64>::zeros(n, n);
        for j in 0..n {
            let mut e = vec![0.0; n];
            e[j] = 1.0;
            let col = sys.gradient(&Image::new(w, h, e).unwrap(), &models, &theta).unwrap();
            for i in 0..n {
                hess[(i, j)] = lambda * col.data()[i] + if i == j { alpha } else { 0.0 };
            }
        }
        let idx_free: Vec<usize> = (0..n).filter(|&i| free[i]).collect();
        let idx_fixed: Vec<usize> = (0..n).filter(|&i| !free[i]).collect();
        let m = DMatrix::from_fn(idx_free.len(), idx_free.len(), |a, b| hess[(idx_free[a], idx_free[b])]);
        let rhs = DVector::from_fn(idx_free.len(), |a, _| {
            let i = idx_free[a];
            alpha * z.data()[i] - idx_fixed.iter().map(|&j| hess[(i, j)] * img.data()[j]).sum::<f64>()
        });
        let dense = m.lu().solve(&rhs).unwrap();
        for (a, &i) in idx_free.iter().enumerate() {
            assert!((g.data()[i] - dense[a]).abs() < 1e-8, "pixel {i}: {} vs {}", g.data()[i], dense[a]);
        }
        for &i in &idx_fixed {
            assert_eq!(g.data()[i], img.data()[i]);
        }
    }

    #[test]
    fn zero_lambda_returns_z_on_free_pixels() {
        let img = random_image(7, 5, 5);
        let z = random_image(8, 5, 5);
        let layout = NeighborLayout::axial4();
        let (windows, models, theta) = fitted(&img, &layout, 5);
        let sys = ArSystem::new(5, 5, &layout, &windows).unwrap();
        let free = vec![true; 25];
        let (g, _) = sys.prox(&z, &img, &free, &models, &theta, 0.0, 1.0, 10, 1e-14).unwrap();
        for (a, b) in g.data().iter().zip(z.data()) {
            assert!((a - b).abs() < 1e-10);
        }
    }

    #[test]
    fn rejects_overlapping_windows_and_bad_sizes() {
        let layout = NeighborLayout::diagonal4();
        assert!(ArSystem::new(4, 4, &layout, &[Rect::new(0, 0, 3, 3), Rect::new(2, 2, 2, 2)]).is_err());
        assert!(ArSystem::new(4, 4, &layout, &[Rect::new(0, 0, 5, 1)]).is_err());
        let sys = ArSystem::new(4, 4, &layout, &[Rect::new(0, 0, 4, 4)]).unwrap();
        let img = Image::zeros(5, 4).unwrap();
        let theta = WeightField::uniform(&img, &layout);
        assert!(sys.energy(&img, &[], &theta).is_err());
    }
}
