//! Multimodal 2D image registration built on the normalized gradient field
//! (NGF) distance.
//!
//! The pipeline has three steps, each run coarse-to-fine over an image
//! pyramid:
//! 1. rotation-sampled rigid pre-alignment,
//! 2. affine refinement by Gauss-Newton,
//! 3. non-parametric refinement on a first-order B-spline displacement grid
//!    with curvature regularization, minimized by L-BFGS.
//!
//! Landmark-based evaluation (median relative target registration errors and
//! robustness) and the file formats used by the `historeg` CLI live in
//! [`eval`] and [`io`].

pub mod cli;
pub mod curvature;
pub mod error;
pub mod eval;
pub mod image;
pub mod io;
pub mod ngf;
pub mod optim;
pub mod pipeline;
pub mod transform;

pub use error::{Error, Result};
