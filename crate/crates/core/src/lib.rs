//! Grayscale image interpolation by a factor of two, regularized by a
//! weighted local autoregressive model and a nonlocal 3-D sparse model and
//! solved with Split-Bregman iterations.
//!
//! ```no_run
//! use arnl_interp::{interpolate, io, SolverConfig};
//!
//! let lr = io::read_image("input.pgm".as_ref()).unwrap();
//! let out = interpolate(&lr, &SolverConfig::default()).unwrap();
//! io::write_pgm("output.pgm".as_ref(), &out.image).unwrap();
//! ```

// parameter checks are written `!(x > 0.0)` so that NaN is rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod ar;
pub mod ar_system;
pub mod bicubic;
pub mod cli;
pub mod error;
pub mod image;
pub mod io;
pub mod metrics;
pub mod nonlocal;
pub mod sampling;
pub mod solver;

pub use error::{Error, Result};
pub use image::{crop, pad_reflect, Image, Rect};
pub use sampling::SamplingSpec;
pub use solver::{interpolate, Interpolation, IterationStats, SolverConfig};
