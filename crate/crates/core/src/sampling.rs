//! The decimation operator, its adjoint, and the retained-sample mask.
//!
//! Decimation keeps pixel `(factor*i + phase.0, factor*j + phase.1)` of the
//! high-resolution grid with no pre-filter, so `D D^T = I` and `D^T D` is a
//! diagonal 0/1 mask.

use crate::error::{Error, Result};
use crate::image::Image;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SamplingSpec {
    factor: usize,
    phase: (usize, usize),
}

impl Default for SamplingSpec {
    fn default() -> Self {
        Self { factor: 2, phase: (0, 0) }
    }
}

impl SamplingSpec {
    /// `phase` is `(row offset, col offset)` of the retained sample in each cell.
    pub fn new(factor: usize, phase: (usize, usize)) -> Result<Self> {
        if factor < 2 {
            return Err(Error::InvalidParameter(format!("sampling factor {factor} < 2")));
        }
        if phase.0 >= factor || phase.1 >= factor {
            return Err(Error::InvalidParameter(format!("phase {phase:?} out of range for factor {factor}")));
        }
        Ok(Self { factor, phase })
    }

    pub fn factor(&self) -> usize {
        self.factor
    }

    pub fn phase(&self) -> (usize, usize) {
        self.phase
    }

    /// Whether HR pixel `(row, col)` is one of the retained samples.
    #[inline]
    pub fn is_sampled(&self, row: usize, col: usize) -> bool {
        row % self.factor == self.phase.0 && col % self.factor == self.phase.1
    }

    /// HR dimensions `(width, height)` for an LR image of the given size.
    pub fn hr_dims(&self, lr_width: usize, lr_height: usize) -> (usize, usize) {
        (lr_width * self.factor, lr_height * self.factor)
    }

    fn check_hr_dims(&self, width: usize, height: usize) -> Result<()> {
        if !width.is_multiple_of(self.factor) || !height.is_multiple_of(self.factor) || width == 0 || height == 0 {
            return Err(Error::DimensionMismatch(format!(
                "{width}x{height} is not divisible by factor {}",
                self.factor
            )));
        }
        Ok(())
    }
}

/// Applies `D`: pure decimation.
pub fn downsample(hr: &Image, spec: &SamplingSpec) -> Result<Image> {
    spec.check_hr_dims(hr.width(), hr.height())?;
    let f = spec.factor;
    let (pr, pc) = spec.phase;
    Image::from_fn(hr.width() / f, hr.height() / f, |i, j| hr.get(f * i + pr, f * j + pc))
}

/// Applies `D^T`: scatters LR samples onto the HR grid, zeros elsewhere.
pub fn adjoint_upsample(lr: &Image, spec: &SamplingSpec, hr_dims: (usize, usize)) -> Result<Image> {
    let (width, height) = hr_dims;
    spec.check_hr_dims(width, height)?;
    if (lr.width(), lr.height()) != (width / spec.factor, height / spec.factor) {
        return Err(Error::DimensionMismatch(format!(
            "LR {}x{} does not match HR {width}x{height} at factor {}",
            lr.width(),
            lr.height(),
            spec.factor
        )));
    }
    let f = spec.factor;
    Image::from_fn(width, height, |r, c| if spec.is_sampled(r, c) { lr.get(r / f, c / f) } else { 0.0 })
}

/// Diagonal of `D^T D`: 1 at retained coordinates, 0 elsewhere.
pub fn sample_mask(spec: &SamplingSpec, hr_dims: (usize, usize)) -> Result<Image> {
    let (width, height) = hr_dims;
    spec.check_hr_dims(width, height)?;
    Image::from_fn(width, height, |r, c| if spec.is_sampled(r, c) { 1.0 } else { 0.0 })
}
