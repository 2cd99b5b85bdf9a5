//! Keys cubic-convolution upscaling.
//!
//! Used as the solver's initial estimate and as the benchmark baseline. The
//! HR grid is aligned with the decimation phase, so retained coordinates
//! reproduce the LR samples exactly.

use crate::image::{reflect_index, Image};
use crate::sampling::SamplingSpec;

/// Kernel parameter of the classic Catmull-Rom style bicubic.
pub const KEYS_A: f64 = -0.5;

/// Keys cubic convolution kernel.
pub fn keys_kernel(t: f64, a: f64) -> f64 {
    let t = t.abs();
    if t <= 1.0 {
        ((a + 2.0) * t - (a + 3.0)) * t * t + 1.0
    } else if t < 2.0 {
        ((a * t - 5.0 * a) * t + 8.0 * a) * t - 4.0 * a
    } else {
        0.0
    }
}

/// Four taps for output position `pos` on the HR axis.
/// Returns the LR index of the first tap and the weights.
fn taps(pos: usize, spec: &SamplingSpec, phase: usize) -> (isize, [f64; 4]) {
    let f = spec.factor() as isize;
    let num = pos as isize - phase as isize;
    let base = num.div_euclid(f);
    let t = num.rem_euclid(f) as f64 / f as f64;
    let w = [
        keys_kernel(t + 1.0, KEYS_A),
        keys_kernel(t, KEYS_A),
        keys_kernel(1.0 - t, KEYS_A),
        keys_kernel(2.0 - t, KEYS_A),
    ];
    (base - 1, w)
}

/// Separable 4-tap Keys interpolation of `lr` onto the HR grid of `spec`.
/// Samples outside the LR image come from mirror reflection.
pub fn bicubic_upscale(lr: &Image, spec: &SamplingSpec) -> Image {
    let (hr_w, hr_h) = spec.hr_dims(lr.width(), lr.height());
    let (phase_r, phase_c) = spec.phase();
    let col_taps: Vec<_> = (0..hr_w).map(|c| taps(c, spec, phase_c)).collect();
    let row_taps: Vec<_> = (0..hr_h).map(|r| taps(r, spec, phase_r)).collect();

    // horizontal pass: lr.height() x hr_w
    let mut horiz = vec![0.0; lr.height() * hr_w];
    for r in 0..lr.height() {
        for (c, (start, w)) in col_taps.iter().enumerate() {
            let mut acc = 0.0;
            for (k, wk) in w.iter().enumerate() {
                let src = reflect_index(start + k as isize, lr.width());
                acc += wk * lr.get(r, src);
            }
            horiz[r * hr_w + c] = acc;
        }
    }

    let mut out = Vec::with_capacity(hr_w * hr_h);
    for (start, w) in &row_taps {
        let rows: [usize; 4] = std::array::from_fn(|k| reflect_index(start + k as isize, lr.height()));
        for c in 0..hr_w {
            let mut acc = 0.0;
            for k in 0..4 {
                acc += w[k] * horiz[rows[k] * hr_w + c];
            }
            out.push(acc);
        }
    }
    Image::new(hr_w, hr_h, out).expect("bicubic output is finite for finite input")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sampling::downsample;

    #[test]
    fn kernel_values() {
        assert_eq!(keys_kernel(0.0, KEYS_A), 1.0);
        assert_eq!(keys_kernel(1.0, KEYS_A), 0.0);
        assert_eq!(keys_kernel(2.0, KEYS_A), 0.0);
        assert_eq!(keys_kernel(-3.0, KEYS_A), 0.0);
        // (a+2)/8 - (a+3)/4 + 1 at a = -1/2
        assert!((keys_kernel(0.5, KEYS_A) - 0.5625).abs() < 1e-15);
        // a*(27/8) - 5a*(9/4) + 8a*(3/2) - 4a at a = -1/2
        assert!((keys_kernel(1.5, KEYS_A) + 0.0625).abs() < 1e-15);
        assert_eq!(keys_kernel(-0.5, KEYS_A), keys_kernel(0.5, KEYS_A));
    }

    #[test]
    fn partition_of_unity() {
        for spec in [SamplingSpec::default(), SamplingSpec::new(3, (1, 2)).unwrap()] {
            for pos in 0..12 {
                let (_, w) = taps(pos, &spec, spec.phase().0);
                assert!((w.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn constant_in_constant_out() {
        let lr = Image::filled(5, 3, 42.0).unwrap();
        let hr = bicubic_upscale(&lr, &SamplingSpec::default());
        assert_eq!((hr.width(), hr.height()), (10, 6));
        assert!(hr.data().iter().all(|v| (v - 42.0).abs() < 1e-12));
    }

    #[test]
    fn nodes_are_exact() {
        let lr = Image::from_fn(7, 5, |r, c| ((r * 37 + c * 91) % 255) as f64).unwrap();
        for spec in [SamplingSpec::default(), SamplingSpec::new(2, (1, 1)).unwrap()] {
            let hr = bicubic_upscale(&lr, &spec);
            assert_eq!(downsample(&hr, &spec).unwrap(), lr);
        }
    }

    #[test]
    fn reproduces_linear_ramp_in_interior() {
        // row ramp [0,1,2,3] repeated over 6 rows; interior half-samples are
        // checked against direct convolution with the kernel taps
        let lr = Image::from_fn(4, 6, |_, c| c as f64).unwrap();
        let hr = bicubic_upscale(&lr, &SamplingSpec::default());
        for r in 0..hr.height() {
            // HR columns 2..=4 only touch LR taps 0..=3 without reflection
            for c in 2..=4 {
                let u = c as f64 / 2.0;
                let i0 = u.floor();
                let t = u - i0;
                let direct: f64 = (-1..=2).map(|k| keys_kernel(t - k as f64, KEYS_A) * (i0 + k as f64)).sum();
                assert!((hr.get(r, c) - u).abs() < 1e-10);
                assert!((direct - u).abs() < 1e-10);
            }
        }
        let plane = Image::from_fn(8, 8, |r, c| 3.0 * r as f64 - 2.0 * c as f64 + 10.0).unwrap();
        let hr = bicubic_upscale(&plane, &SamplingSpec::default());
        for r in 2..13 {
            for c in 2..13 {
                let expect = 1.5 * r as f64 - c as f64 + 10.0;
                assert!((hr.get(r, c) - expect).abs() < 1e-10);
            }
        }
    }

    #[test]
    fn tiny_inputs_use_reflection() {
        let lr = Image::new(1, 1, vec![9.0]).unwrap();
        let hr = bicubic_upscale(&lr, &SamplingSpec::default());
        assert!(hr.data().iter().all(|&v| (v - 9.0).abs() < 1e-12));
    }
}
