//! Row-major grayscale image container and symmetric border handling.
//!
//! Intensities are `f64` in the nominal range `[0, 255]`. Every module
//! that reads outside the image goes through [`reflect_index`], which mirrors
//! about the edge pixel without repeating it (`-1 -> 1`, `n -> n - 2`).

use crate::error::{Error, Result};

/// Axis-aligned rectangle in pixel coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Rect {
    pub row: usize,
    pub col: usize,
    pub height: usize,
    pub width: usize,
}

impl Rect {
    pub fn new(row: usize, col: usize, height: usize, width: usize) -> Self {
        Self { row, col, height, width }
    }

    pub fn area(&self) -> usize {
        self.height * self.width
    }

    /// Pixel coordinates covered by the rectangle, in raster order.
    pub fn pixels(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        (self.row..self.row + self.height).flat_map(move |r| (self.col..self.col + self.width).map(move |c| (r, c)))
    }
}

/// Maps a possibly out-of-range index into `0..len` by mirror reflection
/// about the first and last sample. Repeats periodically for offsets larger
/// than the signal.
#[inline]
pub fn reflect_index(i: isize, len: usize) -> usize {
    debug_assert!(len > 0);
    if len == 1 {
        return 0;
    }
    let n = len as isize;
    if (0..n).contains(&i) {
        return i as usize;
    }
    let period = 2 * (n - 1);
    let m = i.rem_euclid(period);
    if m < n {
        m as usize
    } else {
        (period - m) as usize
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!("degenerate size {width}x{height}")));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!("{} samples for a {width}x{height} image", data.len())));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidImage(format!("non-finite intensity at index {i}")));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Result<Self> {
        Self::new(width, height, vec![value; width * height])
    }

    pub fn zeros(width: usize, height: usize) -> Result<Self> {
        Self::filled(width, height, 0.0)
    }

    /// Builds an image by evaluating `f(row, col)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                data.push(f(r, c));
            }
        }
        Self::new(width, height, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn same_size(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.data[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, value: f64) {
        self.data[row * self.width + col] = value;
    }

    /// Reads a pixel at signed coordinates, reflecting across the borders.
    #[inline]
    pub fn get_reflect(&self, row: isize, col: isize) -> f64 {
        let r = reflect_index(row, self.height);
        let c = reflect_index(col, self.width);
        self.data[r * self.width + c]
    }

    /// Elementwise combination of two equally sized images.
    pub fn zip_map(&self, other: &Image, mut f: impl FnMut(f64, f64) -> f64) -> Result<Image> {
        ensure_same_size(self, other)?;
        let data = self.data.iter().zip(&other.data).map(|(&a, &b)| f(a, b)).collect();
        Image::new(self.width, self.height, data)
    }

    pub fn map(&self, f: impl FnMut(f64) -> f64) -> Result<Image> {
        Image::new(self.width, self.height, self.data.iter().copied().map(f).collect())
    }

    pub fn clamp(&self, lo: f64, hi: f64) -> Image {
        Image { width: self.width, height: self.height, data: self.data.iter().map(|v| v.clamp(lo, hi)).collect() }
    }

    /// Euclidean inner product of the pixel vectors.
    pub fn dot(&self, other: &Image) -> Result<f64> {
        ensure_same_size(self, other)?;
        Ok(self.data.iter().zip(&other.data).map(|(a, b)| a * b).sum())
    }

    pub fn norm(&self) -> f64 {
        self.data.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Reflection-padded copy of an image for tight inner loops that read
/// fixed neighborhoods. `margin` may exceed the image size; reflection then
/// repeats periodically.
#[derive(Debug, Clone)]
pub(crate) struct Padded {
    data: Vec<f64>,
    stride: usize,
    margin: isize,
}

impl Padded {
    pub(crate) fn new(img: &Image, margin: usize) -> Self {
        let m = margin as isize;
        let stride = img.width + 2 * margin;
        let mut data = Vec::with_capacity(stride * (img.height + 2 * margin));
        for r in -m..img.height as isize + m {
            for c in -m..img.width as isize + m {
                data.push(img.get_reflect(r, c));
            }
        }
        Self { data, stride, margin: m }
    }

    #[inline]
    pub(crate) fn get(&self, row: isize, col: isize) -> f64 {
        self.data[((row + self.margin) as usize) * self.stride + (col + self.margin) as usize]
    }
}

pub(crate) fn ensure_same_size(a: &Image, b: &Image) -> Result<()> {
    if a.same_size(b) {
        Ok(())
    } else {
        Err(Error::DimensionMismatch(format!("{}x{} vs {}x{}", a.width, a.height, b.width, b.height)))
    }
}

/// Pads by `margin` pixels on every side using mirror reflection.
pub fn pad_reflect(img: &Image, margin: usize) -> Result<Image> {
    let min_side = img.width.min(img.height);
    if margin == 0 {
        return Ok(img.clone());
    }
    if margin >= min_side {
        return Err(Error::MarginTooLarge { margin, min_side });
    }
    let m = margin as isize;
    Image::from_fn(img.width + 2 * margin, img.height + 2 * margin, |r, c| {
        img.get_reflect(r as isize - m, c as isize - m)
    })
}

/// Extracts the `w`x`h` sub-image whose top-left corner is column `x0`, row `y0`.
pub fn crop(img: &Image, x0: usize, y0: usize, w: usize, h: usize) -> Result<Image> {
    let rect = Rect::new(y0, x0, h, w);
    if w == 0 || h == 0 || x0 + w > img.width || y0 + h > img.height {
        return Err(Error::OutOfBounds { rect, width: img.width, height: img.height });
    }
    let mut data = Vec::with_capacity(w * h);
    for r in y0..y0 + h {
        let start = r * img.width + x0;
        data.extend_from_slice(&img.data[start..start + w]);
    }
    Image::new(w, h, data)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn ramp(w: usize, h: usize) -> Image {
        Image::from_fn(w, h, |r, c| (r * w + c) as f64).unwrap()
    }

    #[test]
    fn rejects_bad_construction() {
        assert!(Image::new(0, 3, vec![]).is_err());
        assert!(Image::new(2, 2, vec![1.0; 3]).is_err());
        assert!(Image::new(1, 1, vec![f64::NAN]).is_err());
        assert!(Image::new(1, 1, vec![f64::INFINITY]).is_err());
    }

    #[test]
    fn reflect_index_mirrors_without_repeating_edge() {
        assert_eq!(reflect_index(-1, 3), 1);
        assert_eq!(reflect_index(-2, 3), 2);
        assert_eq!(reflect_index(3, 3), 1);
        assert_eq!(reflect_index(4, 3), 0);
        assert_eq!(reflect_index(5, 3), 1);
        assert_eq!(reflect_index(-7, 1), 0);
    }

    #[test]
    fn pad_columns_of_a_row_pattern() {
        let img = Image::new(3, 3, vec![1.0, 2.0, 3.0, 1.0, 2.0, 3.0, 1.0, 2.0, 3.0]).unwrap();
        let p = pad_reflect(&img, 1).unwrap();
        assert_eq!(&p.data()[5..10], &[2.0, 1.0, 2.0, 3.0, 2.0]);
    }

    #[test]
    fn pad_row_values_follow_reflection_map() {
        // the 1x3 row [1,2,3] reflected by one sample on each side
        let img = Image::new(3, 1, vec![1.0, 2.0, 3.0]).unwrap();
        // a single row has no vertical reflection, so padding the whole image fails
        assert!(pad_reflect(&img, 1).is_err());
        let row: Vec<f64> = (-1..4).map(|c| img.get_reflect(0, c)).collect();
        assert_eq!(row, vec![2.0, 1.0, 2.0, 3.0, 2.0]);
    }

    #[test]
    fn pad_zero_margin_is_identity() {
        let img = ramp(5, 4);
        assert_eq!(pad_reflect(&img, 0).unwrap(), img);
    }

    #[test]
    fn pad_2x2_corner() {
        let img = Image::new(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        let p = pad_reflect(&img, 1).unwrap();
        assert_eq!((p.width(), p.height()), (4, 4));
        assert_eq!(p.get(0, 0), 4.0);
        assert_eq!(crop(&p, 1, 1, 2, 2).unwrap(), img);
        assert!(matches!(pad_reflect(&img, 2), Err(Error::MarginTooLarge { .. })));
    }

    #[test]
    fn crop_cases() {
        let img = ramp(4, 4);
        assert_eq!(crop(&img, 0, 0, 4, 4).unwrap(), img);
        let c = crop(&img, 1, 1, 2, 2).unwrap();
        assert_eq!(c.data(), &[5.0, 6.0, 9.0, 10.0]);
        assert!(crop(&img, 0, 0, 0, 2).is_err());
        assert!(crop(&img, 3, 0, 2, 2).is_err());
    }

    proptest! {
        #[test]
        fn pad_then_crop_is_identity(w in 2usize..9, h in 2usize..9, seed in any::<u64>(), m in 0usize..8) {
            let margin = m % w.min(h);
            let img = Image::from_fn(w, h, |r, c| ((r * 31 + c * 17) as u64 ^ seed) as f64 % 255.0).unwrap();
            let p = pad_reflect(&img, margin).unwrap();
            prop_assert_eq!(p.width(), w + 2 * margin);
            prop_assert!(p.data().iter().all(|v| v.is_finite()));
            prop_assert_eq!(crop(&p, margin, margin, w, h).unwrap(), img);
        }
    }
}
