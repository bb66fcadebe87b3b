//! Scalar images on regular grids, intensity preprocessing, coarse-to-fine
//! pyramids, bilinear sampling, and finite-difference gradient operators.
//!
//! Conventions used throughout the crate:
//! - pixels are stored row-major, `data[i * width + j]` for row `i`, column `j`;
//! - the physical center of pixel `(i, j)` is
//!   `(origin.0 + (j + 0.5) * spacing, origin.1 + (i + 0.5) * spacing)`;
//! - a freshly loaded image has `origin = (0, 0)` and `spacing = 1 / max(width, height)`,
//!   so its longer side spans the unit interval;
//! - samples are stored as `f32`, all arithmetic is done in `f64`.

use crate::error::{Error, Result};

/// RGB-to-luma weights (ITU-R BT.601).
pub const LUMA_WEIGHTS: [f64; 3] = [0.299, 0.587, 0.114];

/// A single-channel image with physical pixel spacing and origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    spacing: f64,
    origin: (f64, f64),
    data: Vec<f32>,
}

impl Image {
    /// Builds an image from raw samples; fails if `data` does not match the dimensions.
    pub fn from_raw(
        width: usize,
        height: usize,
        spacing: f64,
        origin: (f64, f64),
        data: Vec<f32>,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(Error::InvalidImage(format!(
                "dimensions {width}x{height} must be nonzero"
            )));
        }
        if data.len() != width * height {
            return Err(Error::InvalidImage(format!(
                "{} samples for {width}x{height} image",
                data.len()
            )));
        }
        if !(spacing.is_finite() && spacing > 0.0) {
            return Err(Error::InvalidImage(format!("invalid spacing {spacing}")));
        }
        Ok(Self {
            width,
            height,
            spacing,
            origin,
            data,
        })
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// Number of pixels.
    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    pub fn origin(&self) -> (f64, f64) {
        self.origin
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    /// Physical extent `(width, height)` of the pixel area.
    pub fn extent(&self) -> (f64, f64) {
        (
            self.width as f64 * self.spacing,
            self.height as f64 * self.spacing,
        )
    }

    /// Physical center of pixel `(i, j)` (row, column).
    pub fn pixel_center(&self, i: usize, j: usize) -> (f64, f64) {
        (
            self.origin.0 + (j as f64 + 0.5) * self.spacing,
            self.origin.1 + (i as f64 + 0.5) * self.spacing,
        )
    }

    /// All samples promoted to `f64`.
    pub fn values_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    fn sample_or_zero(&self, i: i64, j: i64) -> f64 {
        if i < 0 || j < 0 || i >= self.height as i64 || j >= self.width as i64 {
            0.0
        } else {
            self.data[i as usize * self.width + j as usize] as f64
        }
    }

    /// Bilinear interpolation at a physical point.
    ///
    /// Outside the hull of pixel centers the image is treated as zero one
    /// pixel out, so values fall off linearly to zero and the interpolant is
    /// continuous everywhere; beyond that ring it is exactly zero.
    pub fn interpolate(&self, x: f64, y: f64) -> f64 {
        let u = (x - self.origin.0) / self.spacing - 0.5;
        let v = (y - self.origin.1) / self.spacing - 0.5;
        let j0 = u.floor();
        let i0 = v.floor();
        let fu = u - j0;
        let fv = v - i0;
        let (i0, j0) = (i0 as i64, j0 as i64);
        let s00 = self.sample_or_zero(i0, j0);
        let s01 = self.sample_or_zero(i0, j0 + 1);
        let s10 = self.sample_or_zero(i0 + 1, j0);
        let s11 = self.sample_or_zero(i0 + 1, j0 + 1);
        let top = s00 + fu * (s01 - s00);
        let bot = s10 + fu * (s11 - s10);
        top + fv * (bot - top)
    }

    /// Bilinear value and its spatial gradient `(value, d/dx, d/dy)`.
    pub fn interpolate_with_gradient(&self, x: f64, y: f64) -> (f64, f64, f64) {
        let u = (x - self.origin.0) / self.spacing - 0.5;
        let v = (y - self.origin.1) / self.spacing - 0.5;
        let j0 = u.floor();
        let i0 = v.floor();
        let fu = u - j0;
        let fv = v - i0;
        let (i0, j0) = (i0 as i64, j0 as i64);
        let s00 = self.sample_or_zero(i0, j0);
        let s01 = self.sample_or_zero(i0, j0 + 1);
        let s10 = self.sample_or_zero(i0 + 1, j0);
        let s11 = self.sample_or_zero(i0 + 1, j0 + 1);
        let top = s00 + fu * (s01 - s00);
        let bot = s10 + fu * (s11 - s10);
        let value = top + fv * (bot - top);
        let du = (1.0 - fv) * (s01 - s00) + fv * (s11 - s10);
        let dv = (1.0 - fu) * (s10 - s00) + fu * (s11 - s01);
        (value, du / self.spacing, dv / self.spacing)
    }

    /// Intensity-weighted centroid; the domain center if the image is all zero.
    pub fn center_of_mass(&self) -> (f64, f64) {
        let mut mass = 0.0;
        let mut mx = 0.0;
        let mut my = 0.0;
        for i in 0..self.height {
            let y = self.origin.1 + (i as f64 + 0.5) * self.spacing;
            let row = &self.data[i * self.width..(i + 1) * self.width];
            let mut row_mass = 0.0;
            let mut row_mx = 0.0;
            for (j, &s) in row.iter().enumerate() {
                let m = s as f64;
                row_mass += m;
                row_mx += m * (j as f64 + 0.5);
            }
            mass += row_mass;
            mx += self.origin.0 * row_mass + self.spacing * row_mx;
            my += y * row_mass;
        }
        if mass <= 0.0 {
            let (ex, ey) = self.extent();
            (self.origin.0 + 0.5 * ex, self.origin.1 + 0.5 * ey)
        } else {
            (mx / mass, my / mass)
        }
    }
}

/// Turns raw grayscale samples in `[0, 1]` into a registration-ready image:
/// inverts intensities (stained tissue becomes bright, background zero) and
/// rescales the result to span `[0, 1]`.
pub fn preprocess_gray(width: usize, height: usize, gray: &[f64]) -> Result<Image> {
    if gray.len() != width * height {
        return Err(Error::InvalidImage(format!(
            "{} samples for {width}x{height} image",
            gray.len()
        )));
    }
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for &v in gray {
        if !v.is_finite() {
            return Err(Error::InvalidImage("non-finite sample".into()));
        }
        lo = lo.min(v);
        hi = hi.max(v);
    }
    let span = hi - lo;
    let data: Vec<f32> = if span > 0.0 {
        gray.iter().map(|&v| ((hi - v) / span) as f32).collect()
    } else {
        vec![0.0; gray.len()]
    };
    let spacing = 1.0 / width.max(height) as f64;
    Image::from_raw(width, height, spacing, (0.0, 0.0), data)
}

/// A coarse-to-fine pyramid; `levels[0]` is the finest (original) image.
#[derive(Debug, Clone)]
pub struct Pyramid {
    levels: Vec<Image>,
}

impl Pyramid {
    /// Repeatedly halves `base` with a 2x2 box filter until a side is at most
    /// two pixels. Coarse levels keep the origin; spacing doubles per level.
    pub fn build(base: Image) -> Self {
        let mut levels = vec![base];
        while {
            let last = levels.last().unwrap();
            last.width.min(last.height) > 2
        } {
            levels.push(coarsen(levels.last().unwrap()));
        }
        Self { levels }
    }

    /// Rebuilds a pyramid from stored levels, finest first.
    pub fn from_levels(levels: Vec<Image>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidImage("pyramid without levels".into()));
        }
        Ok(Self { levels })
    }

    pub fn levels(&self) -> &[Image] {
        &self.levels
    }

    pub fn finest(&self) -> &Image {
        &self.levels[0]
    }

    /// Index of the finest level whose longer side is at most `max_size`;
    /// falls back to the coarsest level if even that is larger.
    pub fn level_at_most(&self, max_size: usize) -> usize {
        for (idx, level) in self.levels.iter().enumerate() {
            if level.width.max(level.height) <= max_size {
                return idx;
            }
        }
        self.levels.len() - 1
    }
}

/// One pyramid step: 2x2 box filter with edge replication, halved dimensions
/// (rounded up), doubled spacing. Coarse pixel centers sit at the mean of the
/// fine centers they cover, so the origin is unchanged.
fn coarsen(img: &Image) -> Image {
    let w = img.width.div_ceil(2);
    let h = img.height.div_ceil(2);
    let mut data = Vec::with_capacity(w * h);
    for i in 0..h {
        let r0 = 2 * i;
        let r1 = (2 * i + 1).min(img.height - 1);
        for j in 0..w {
            let c0 = 2 * j;
            let c1 = (2 * j + 1).min(img.width - 1);
            let sum = img.data[r0 * img.width + c0] as f64
                + img.data[r0 * img.width + c1] as f64
                + img.data[r1 * img.width + c0] as f64
                + img.data[r1 * img.width + c1] as f64;
            data.push((0.25 * sum) as f32);
        }
    }
    Image {
        width: w,
        height: h,
        spacing: 2.0 * img.spacing,
        origin: img.origin,
        data,
    }
}

/// Horizontal derivative: central differences inside, one-sided at the left
/// and right columns. `out` must hold `width * height` values.
pub fn gradient_x(src: &[f64], width: usize, height: usize, spacing: f64, out: &mut [f64]) {
    debug_assert_eq!(src.len(), width * height);
    debug_assert_eq!(out.len(), width * height);
    let inv_h = 1.0 / spacing;
    let inv_2h = 0.5 / spacing;
    for i in 0..height {
        let row = i * width;
        if width == 1 {
            out[row] = 0.0;
            continue;
        }
        out[row] = (src[row + 1] - src[row]) * inv_h;
        for j in 1..width - 1 {
            out[row + j] = (src[row + j + 1] - src[row + j - 1]) * inv_2h;
        }
        out[row + width - 1] = (src[row + width - 1] - src[row + width - 2]) * inv_h;
    }
}

/// Vertical derivative: central differences inside, one-sided at the top and
/// bottom rows.
pub fn gradient_y(src: &[f64], width: usize, height: usize, spacing: f64, out: &mut [f64]) {
    debug_assert_eq!(src.len(), width * height);
    debug_assert_eq!(out.len(), width * height);
    let inv_h = 1.0 / spacing;
    let inv_2h = 0.5 / spacing;
    if height == 1 {
        out[..width].fill(0.0);
        return;
    }
    for j in 0..width {
        out[j] = (src[width + j] - src[j]) * inv_h;
    }
    for i in 1..height - 1 {
        let row = i * width;
        for j in 0..width {
            out[row + j] = (src[row + width + j] - src[row - width + j]) * inv_2h;
        }
    }
    let last = (height - 1) * width;
    for j in 0..width {
        out[last + j] = (src[last + j] - src[last - width + j]) * inv_h;
    }
}

/// Adjoint of [`gradient_x`]; accumulates into `out` (callers zero it first
/// when they want the bare transpose).
pub fn gradient_x_adjoint(src: &[f64], width: usize, height: usize, spacing: f64, out: &mut [f64]) {
    debug_assert_eq!(src.len(), width * height);
    debug_assert_eq!(out.len(), width * height);
    let inv_h = 1.0 / spacing;
    let inv_2h = 0.5 / spacing;
    for i in 0..height {
        let row = i * width;
        if width == 1 {
            continue;
        }
        out[row + 1] += src[row] * inv_h;
        out[row] -= src[row] * inv_h;
        for j in 1..width - 1 {
            out[row + j + 1] += src[row + j] * inv_2h;
            out[row + j - 1] -= src[row + j] * inv_2h;
        }
        out[row + width - 1] += src[row + width - 1] * inv_h;
        out[row + width - 2] -= src[row + width - 1] * inv_h;
    }
}

/// Adjoint of [`gradient_y`]; accumulates into `out`.
pub fn gradient_y_adjoint(src: &[f64], width: usize, height: usize, spacing: f64, out: &mut [f64]) {
    debug_assert_eq!(src.len(), width * height);
    debug_assert_eq!(out.len(), width * height);
    let inv_h = 1.0 / spacing;
    let inv_2h = 0.5 / spacing;
    if height == 1 {
        return;
    }
    for j in 0..width {
        out[width + j] += src[j] * inv_h;
        out[j] -= src[j] * inv_h;
    }
    for i in 1..height - 1 {
        let row = i * width;
        for j in 0..width {
            out[row + width + j] += src[row + j] * inv_2h;
            out[row - width + j] -= src[row + j] * inv_2h;
        }
    }
    let last = (height - 1) * width;
    for j in 0..width {
        out[last + j] += src[last + j] * inv_h;
        out[last - width + j] -= src[last + j] * inv_h;
    }
}
