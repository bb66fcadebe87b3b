//! File formats and image loading: decoding and preprocessing input images,
//! the preprocessed-pyramid cache, landmark CSV, transform files, and the
//! INI-style pipeline configuration.

pub mod cache;
pub mod config;
pub mod landmarks;
pub mod transform_file;

use crate::error::{Error, Result};
use crate::image::{preprocess_gray, Image, Pyramid, LUMA_WEIGHTS};
use std::path::Path;

/// Decodes an image file, converts it to grayscale, and preprocesses it for
/// registration (inversion plus rescaling to `[0, 1]`).
pub fn load_image(path: &Path) -> Result<Image> {
    let decoded = image::open(path).map_err(|source| Error::Decode {
        path: path.to_path_buf(),
        source,
    })?;
    let rgb = decoded.to_rgb8();
    let (w, h) = (rgb.width() as usize, rgb.height() as usize);
    let gray: Vec<f64> = rgb
        .pixels()
        .map(|p| {
            (LUMA_WEIGHTS[0] * p.0[0] as f64
                + LUMA_WEIGHTS[1] * p.0[1] as f64
                + LUMA_WEIGHTS[2] * p.0[2] as f64)
                / 255.0
        })
        .collect();
    preprocess_gray(w, h, &gray)
}

/// Loads a registration-ready pyramid: pyramid cache files are read back
/// directly, anything else is decoded, preprocessed, and coarsened.
pub fn load_pyramid(path: &Path) -> Result<Pyramid> {
    if cache::is_cache_file(path)? {
        cache::read_cache(path)
    } else {
        Ok(Pyramid::build(load_image(path)?))
    }
}
