//! Split-Bregman interpolation loop.
//!
//! Minimizes `1/2 ||y - Dx||^2 + lambda Phi(x, w) + gamma Psi(x)` by splitting
//! `x = g` (local AR term) and `x = h` (nonlocal sparse term):
//!
//! 1. `x = (D^T D + (alpha + beta) I)^-1 (D^T y + alpha (g + U) + beta (h + V))`
//! 2. fit AR coefficients per window on `x`; with those fixed,
//!    `g = argmin lambda Phi(g) + alpha/2 ||g - (x - U)||^2` (or, with
//!    [`GStep::Predict`], `g` is the AR prediction of `x`)
//! 3. `h = prox(x - V)` by collaborative shrinkage with `tau = gamma / (2 beta)`
//! 4. `U -= x - g`, `V -= x - h`

use crate::ar::{self, ARModel, NeighborLayout, PatchWeightParams, Ridge, WeightField};
use crate::ar_system::ArSystem;
use crate::bicubic::bicubic_upscale;
use crate::error::{Error, Result};
use crate::image::{ensure_same_size, Image, Rect};
use crate::nonlocal::{self, BlockMatchParams};
use crate::sampling::{adjoint_upsample, downsample, SamplingSpec};

#[derive(Debug, Clone, PartialEq)]
pub struct ArConfig {
    pub layout: NeighborLayout,
    pub patch: PatchWeightParams,
    /// Side of the square coefficient training windows (tiled).
    pub window: usize,
    /// Relative ridge, scaled by the mean diagonal of the normal matrix.
    pub ridge: f64,
    pub g_step: GStep,
    /// Conjugate-gradient iteration cap for [`GStep::Prox`].
    pub cg_iters: usize,
}

impl Default for ArConfig {
    fn default() -> Self {
        Self {
            layout: NeighborLayout::diagonal4(),
            patch: PatchWeightParams::default(),
            window: 7,
            ridge: 1e-6,
            g_step: GStep::Prox,
            cg_iters: 30,
        }
    }
}

/// How `g` is formed once the AR coefficients are fitted on `x`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GStep {
    /// `g` is the AR prediction of `x`.
    Predict,
    /// `g` minimizes `lambda Phi(g) + alpha/2 ||g - (x - U)||^2` with the
    /// coefficients held fixed.
    Prox,
}

/// Starting value of the auxiliary variables `g` and `h`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AuxInit {
    /// Same as the bicubic initial estimate.
    Bicubic,
    /// All zeros.
    Zero,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolverConfig {
    pub lambda: f64,
    pub gamma: f64,
    pub alpha: f64,
    pub beta: f64,
    pub max_iters: usize,
    pub ar: ArConfig,
    pub nl: BlockMatchParams,
    pub sampling: SamplingSpec,
    pub aux_init: AuxInit,
    /// Keep `g` and `h` equal to `x` on the retained samples, so the local
    /// and nonlocal steps only revise interpolated pixels.
    pub anchor_samples: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        Self {
            lambda: 0.02,
            gamma: 0.6,
            alpha: 0.2,
            beta: 0.2,
            max_iters: 10,
            ar: ArConfig::default(),
            nl: BlockMatchParams::default(),
            sampling: SamplingSpec::default(),
            aux_init: AuxInit::Bicubic,
            anchor_samples: true,
        }
    }
}

impl SolverConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} = {v} must be positive")))
            }
        };
        let nonneg = |name: &str, v: f64| {
            if v >= 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidParameter(format!("{name} = {v} must be nonnegative")))
            }
        };
        positive("alpha", self.alpha)?;
        positive("beta", self.beta)?;
        nonneg("lambda", self.lambda)?;
        nonneg("gamma", self.gamma)?;
        nonneg("ar.ridge", self.ar.ridge)?;
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be at least 1".into()));
        }
        if self.ar.window == 0 {
            return Err(Error::InvalidParameter("ar.window must be at least 1".into()));
        }
        self.nl.validate()
    }
}

/// Closed-form `x` update: elementwise division by `mask + alpha + beta`.
#[allow(clippy::too_many_arguments)]
pub fn solve_x(
    y: &Image,
    g: &Image,
    h: &Image,
    u: &Image,
    v: &Image,
    alpha: f64,
    beta: f64,
    spec: &SamplingSpec,
) -> Result<Image> {
    let sum = alpha + beta;
    if !(sum > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "alpha + beta = {sum}: the system is singular off the sample grid"
        )));
    }
    for other in [h, u, v] {
        ensure_same_size(g, other)?;
    }
    let dims = (g.width(), g.height());
    let dty = adjoint_upsample(y, spec, dims)?;
    let w = g.width();
    let data = (0..g.len())
        .map(|i| {
            let r = dty.data()[i] + alpha * (g.data()[i] + u.data()[i]) + beta * (h.data()[i] + v.data()[i]);
            let diag = if spec.is_sampled(i / w, i % w) { 1.0 + sum } else { sum };
            r / diag
        })
        .collect();
    Image::new(g.width(), g.height(), data)
}

/// Bregman multiplier update `m - (x - z)`.
pub fn bregman_update(m: &Image, x: &Image, z: &Image) -> Result<Image> {
    ensure_same_size(m, x)?;
    ensure_same_size(x, z)?;
    let data = m.data().iter().zip(x.data().iter().zip(z.data())).map(|(&m, (&x, &z))| m - (x - z)).collect();
    Image::new(m.width(), m.height(), data)
}

/// Per-iteration diagnostics of the current estimate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationStats {
    pub iteration: usize,
    /// `||y - D x||_2`
    pub data_residual: f64,
    /// Weighted AR energy of `x` under the coefficients fitted this iteration.
    pub phi: f64,
    /// Nonlocal l1 energy of `x`.
    pub psi: f64,
}

impl IterationStats {
    /// `1/2 residual^2 + lambda phi + gamma psi`.
    pub fn objective(&self, cfg: &SolverConfig) -> f64 {
        0.5 * self.data_residual * self.data_residual + cfg.lambda * self.phi + cfg.gamma * self.psi
    }
}

#[derive(Debug, Clone)]
pub struct SolverState {
    pub x: Image,
    pub g: Image,
    pub h: Image,
    pub u: Image,
    pub v: Image,
    pub t: usize,
    pub history: Vec<IterationStats>,
    y: Image,
    windows: Vec<Rect>,
    system: Option<ArSystem>,
    free: Vec<bool>,
}

impl SolverState {
    pub fn new(y: &Image, cfg: &SolverConfig) -> Result<Self> {
        cfg.validate()?;
        let x = bicubic_upscale(y, &cfg.sampling);
        let zeros = Image::zeros(x.width(), x.height())?;
        let aux = match cfg.aux_init {
            AuxInit::Bicubic => x.clone(),
            AuxInit::Zero => zeros.clone(),
        };
        let windows = ar::tile_windows(x.width(), x.height(), cfg.ar.window);
        let system = match cfg.ar.g_step {
            GStep::Prox => Some(ArSystem::new(x.width(), x.height(), &cfg.ar.layout, &windows)?),
            GStep::Predict => None,
        };
        let spec = &cfg.sampling;
        let free =
            (0..x.len()).map(|i| !(cfg.anchor_samples && spec.is_sampled(i / x.width(), i % x.width()))).collect();
        Ok(Self {
            g: aux.clone(),
            h: aux,
            u: zeros.clone(),
            v: zeros,
            x,
            t: 0,
            history: Vec::new(),
            y: y.clone(),
            windows,
            system,
            free,
        })
    }

    /// Copies `x` into `target` on the retained sample grid.
    fn anchor(&self, target: &mut Image, spec: &SamplingSpec) {
        for r in (spec.phase().0..target.height()).step_by(spec.factor()) {
            for c in (spec.phase().1..target.width()).step_by(spec.factor()) {
                target.set(r, c, self.x.get(r, c));
            }
        }
    }

    /// AR sub-problem: per-window weighted fit on `x`, then prediction.
    fn local_step(&self, cfg: &SolverConfig) -> Result<(Image, f64)> {
        if cfg.lambda == 0.0 {
            // without the AR term the g sub-problem reduces to g = x - U
            return Ok((self.x.zip_map(&self.u, |x, u| x - u)?, 0.0));
        }
        let theta = WeightField::compute(&self.x, &cfg.ar.layout, &cfg.ar.patch);
        let ridge = Ridge::TraceScaled(cfg.ar.ridge / cfg.lambda);
        let models: Vec<(Rect, ARModel)> = ar::fit_tiles(&self.x, &self.windows, &cfg.ar.layout, &theta, ridge)?;
        let g = match &self.system {
            Some(system) => {
                let z = self.x.zip_map(&self.u, |x, u| x - u)?;
                // warm start from the previous g, with pinned samples taken from x
                let start = Image::from_fn(z.width(), z.height(), |r, c| {
                    if self.free[r * z.width() + c] {
                        self.g.get(r, c)
                    } else {
                        self.x.get(r, c)
                    }
                })?;
                let coeffs: Vec<ARModel> = models.iter().map(|(_, m)| m.clone()).collect();
                system.prox(&z, &start, &self.free, &coeffs, &theta, cfg.lambda, cfg.alpha, cfg.ar.cg_iters, 1e-6)?.0
            }
            None => {
                let mut g = self.x.clone();
                for (rect, model) in &models {
                    for ((r, c), p) in rect.pixels().zip(ar::predict_ar(&self.x, model, *rect)) {
                        g.set(r, c, p);
                    }
                }
                g
            }
        };
        let phi = ar::local_ar_energy_with_weights(&self.x, &models, &theta);
        Ok((g, phi))
    }

    /// Runs one full iteration and records its diagnostics.
    pub fn step(&mut self, cfg: &SolverConfig) -> Result<&IterationStats> {
        let spec = &cfg.sampling;
        self.x = solve_x(&self.y, &self.g, &self.h, &self.u, &self.v, cfg.alpha, cfg.beta, spec)?;

        let (mut g, phi) = self.local_step(cfg)?;
        let anchor_input = self.x.zip_map(&self.v, |x, v| x - v)?;
        let mut h = nonlocal::solve_h_subproblem(&anchor_input, cfg.beta, cfg.gamma, &cfg.nl)?;
        if cfg.anchor_samples {
            self.anchor(&mut g, spec);
            self.anchor(&mut h, spec);
        }

        self.u = bregman_update(&self.u, &self.x, &g)?;
        self.v = bregman_update(&self.v, &self.x, &h)?;
        self.g = g;
        self.h = h;
        self.t += 1;

        let residual = downsample(&self.x, spec)?.zip_map(&self.y, |a, b| a - b)?.norm();
        let psi = nonlocal::nonlocal_energy(&self.x, &cfg.nl)?;
        self.history.push(IterationStats { iteration: self.t, data_residual: residual, phi, psi });
        Ok(self.history.last().expect("just pushed"))
    }
}

/// Result of [`interpolate`].
#[derive(Debug, Clone)]
pub struct Interpolation {
    /// Final estimate clamped to `[0, 255]`, not quantized.
    pub image: Image,
    /// Final estimate before clamping.
    pub raw: Image,
    pub history: Vec<IterationStats>,
}

/// Upscales `y` by the configured factor.
pub fn interpolate(y: &Image, cfg: &SolverConfig) -> Result<Interpolation> {
    let mut state = SolverState::new(y, cfg)?;
    while state.t < cfg.max_iters {
        state.step(cfg)?;
    }
    Ok(Interpolation { image: state.x.clamp(0.0, 255.0), raw: state.x, history: state.history })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::psnr;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |_, _| rng.random_range(0.0..255.0)).unwrap()
    }

    #[test]
    fn solve_x_consistent_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let spec = SamplingSpec::default();
        let z = random_image(&mut rng, 6, 6);
        let y = downsample(&z, &spec).unwrap();
        let zero = Image::zeros(6, 6).unwrap();
        for (a, b) in [(0.2, 0.2), (1.0, 3.0), (0.01, 5.0)] {
            let x = solve_x(&y, &z, &z, &zero, &zero, a, b, &spec).unwrap();
            for (p, q) in x.data().iter().zip(z.data()) {
                assert!((p - q).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn solve_x_small_example() {
        let spec = SamplingSpec::default();
        let y = Image::new(1, 1, vec![4.0]).unwrap();
        let two = Image::filled(2, 2, 2.0).unwrap();
        let zero = Image::zeros(2, 2).unwrap();
        let x = solve_x(&y, &two, &two, &zero, &zero, 1.0, 1.0, &spec).unwrap();
        assert!((x.get(0, 0) - 8.0 / 3.0).abs() < 1e-15);
        assert_eq!(&x.data()[1..], &[2.0, 2.0, 2.0]);

        // dense solve of (D^T D + 2 I) x = r
        let mut m = DMatrix::<f64>::identity(4, 4) * 2.0;
        m[(0, 0)] += 1.0;
        let r = DVector::from_vec(vec![4.0 + 4.0, 4.0, 4.0, 4.0]);
        let dense = m.lu().solve(&r).unwrap();
        for i in 0..4 {
            assert!((dense[i] - x.data()[i]).abs() < 1e-12);
        }
        assert!(solve_x(&y, &two, &two, &zero, &zero, 0.0, 0.0, &spec).is_err());
    }

    #[test]
    fn bregman_examples() {
        let m = Image::new(2, 1, vec![1.0, -2.0]).unwrap();
        let x = Image::new(2, 1, vec![5.0, 7.0]).unwrap();
        assert_eq!(bregman_update(&m, &x, &x).unwrap(), m);
        let z = Image::new(2, 1, vec![4.0, 9.0]).unwrap();
        let zero = Image::zeros(2, 1).unwrap();
        assert_eq!(bregman_update(&zero, &x, &z).unwrap().data(), &[-1.0, 2.0]);
        let twice = bregman_update(&bregman_update(&m, &x, &z).unwrap(), &x, &z).unwrap();
        assert_eq!(twice.data(), &[1.0 - 2.0, -2.0 + 4.0]);
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        assert!(SolverConfig { alpha: 0.0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { lambda: -1.0, ..Default::default() }.validate().is_err());
        assert!(SolverConfig { max_iters: 0, ..Default::default() }.validate().is_err());
    }

    #[test]
    fn constant_input_stays_constant() {
        let y = Image::filled(12, 12, 77.0).unwrap();
        let truth = Image::filled(24, 24, 77.0).unwrap();
        for g_step in [GStep::Prox, GStep::Predict] {
            let mut cfg = SolverConfig { max_iters: 3, ..Default::default() };
            cfg.ar.g_step = g_step;
            let out = interpolate(&y, &cfg).unwrap();
            assert!(psnr(&out.image, &truth, 255.0).unwrap() >= 60.0);
            assert_eq!(out.history.len(), 3);
        }
    }

    #[test]
    fn samples_stay_pinned() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let y = random_image(&mut rng, 16, 12);
        let cfg = SolverConfig { max_iters: 4, ..Default::default() };
        let out = interpolate(&y, &cfg).unwrap();
        let back = downsample(&out.raw, &cfg.sampling).unwrap();
        for (a, b) in back.data().iter().zip(y.data()) {
            assert!((a - b).abs() <= 1e-6);
        }
        assert!(out.history.iter().all(|s| s.phi >= 0.0 && s.psi >= 0.0));
    }

    #[test]
    fn zero_regularization_keeps_bicubic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let y = random_image(&mut rng, 10, 10);
        let cfg = SolverConfig { max_iters: 1, lambda: 0.0, gamma: 0.0, ..Default::default() };
        let out = interpolate(&y, &cfg).unwrap();
        assert!(out.history[0].data_residual < 1e-9);
        let bic = bicubic_upscale(&y, &cfg.sampling);
        for (a, b) in out.raw.data().iter().zip(bic.data()) {
            assert!((a - b).abs() < 1e-9);
        }
    }
}
