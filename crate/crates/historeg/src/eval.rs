//! Landmark-based evaluation metrics.
//!
//! Registration quality for a pair of images with corresponding landmarks is
//! summarized by relative target registration errors: Euclidean distances
//! between warped and target landmarks, normalized by the target image
//! diagonal. Medians make the per-pair summary robust to single bad
//! landmarks; aggregates over many pairs use the mean (AMrTRE) and median
//! (MMrTRE) of the per-pair medians.

use crate::error::{Error, Result};

/// Median with the even-count convention of averaging the two middle values.
pub fn median(values: &[f64]) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidLandmarks("median of an empty set".into()));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidLandmarks("non-finite value".into()));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    Ok(if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    })
}

/// Euclidean distances between corresponding points, divided by `diagonal`.
pub fn relative_errors(
    warped: &[(f64, f64)],
    target: &[(f64, f64)],
    diagonal: f64,
) -> Result<Vec<f64>> {
    if warped.len() != target.len() {
        return Err(Error::InvalidLandmarks(format!(
            "{} warped landmarks vs {} targets",
            warped.len(),
            target.len()
        )));
    }
    if warped.is_empty() {
        return Err(Error::InvalidLandmarks("empty landmark set".into()));
    }
    if !(diagonal.is_finite() && diagonal > 0.0) {
        return Err(Error::InvalidLandmarks(format!(
            "diagonal {diagonal} must be positive"
        )));
    }
    warped
        .iter()
        .zip(target)
        .map(|(w, t)| {
            let d = ((w.0 - t.0).powi(2) + (w.1 - t.1).powi(2)).sqrt() / diagonal;
            if d.is_finite() {
                Ok(d)
            } else {
                Err(Error::InvalidLandmarks("non-finite landmark".into()))
            }
        })
        .collect()
}

/// Median relative target registration error of one image pair.
pub fn mrtre(warped: &[(f64, f64)], target: &[(f64, f64)], diagonal: f64) -> Result<f64> {
    median(&relative_errors(warped, target, diagonal)?)
}

/// Mean of per-pair median errors.
pub fn amrtre(per_pair_medians: &[f64]) -> Result<f64> {
    if per_pair_medians.is_empty() {
        return Err(Error::InvalidLandmarks("no pairs".into()));
    }
    Ok(per_pair_medians.iter().sum::<f64>() / per_pair_medians.len() as f64)
}

/// Median of per-pair median errors.
pub fn mmrtre(per_pair_medians: &[f64]) -> Result<f64> {
    median(per_pair_medians)
}

/// Fraction of entries whose error strictly decreased.
pub fn robustness(initial: &[f64], final_: &[f64]) -> Result<f64> {
    if initial.len() != final_.len() {
        return Err(Error::InvalidLandmarks(format!(
            "{} initial errors vs {} final",
            initial.len(),
            final_.len()
        )));
    }
    if initial.is_empty() {
        return Err(Error::InvalidLandmarks("empty error set".into()));
    }
    let improved = initial
        .iter()
        .zip(final_)
        .filter(|(a, b)| b < a)
        .count();
    Ok(improved as f64 / initial.len() as f64)
}
