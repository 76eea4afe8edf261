//! Mask overlap scores and ROI uptake curves.

use crate::error::{Error, Result};
use crate::volume::{ensure_same, Mask3D, Volume3D};

fn counts(a: &Mask3D, b: &Mask3D) -> Result<(usize, usize, usize)> {
    ensure_same(a.shape(), b.shape())?;
    let mut inter = 0;
    let mut union = 0;
    for (&x, &y) in a.values().iter().zip(b.values()) {
        inter += (x && y) as usize;
        union += (x || y) as usize;
    }
    Ok((inter, union, a.count() + b.count()))
}

/// `2|A∩B| / (|A| + |B|)`; two empty masks score 1.
pub fn dice(a: &Mask3D, b: &Mask3D) -> Result<f64> {
    let (inter, _, total) = counts(a, b)?;
    Ok(if total == 0 { 1.0 } else { 2.0 * inter as f64 / total as f64 })
}

/// `|A∩B| / |A∪B|`; two empty masks score 1.
pub fn iou(a: &Mask3D, b: &Mask3D) -> Result<f64> {
    let (inter, union, _) = counts(a, b)?;
    Ok(if union == 0 { 1.0 } else { inter as f64 / union as f64 })
}

/// Mean ROI intensity per frame, as `(frame index, mean)`.
pub fn uptake_curve(series: &[Volume3D], roi: &Mask3D) -> Result<Vec<(usize, f64)>> {
    let n = roi.count();
    if n == 0 {
        return Err(Error::Empty("uptake curve over an empty roi".into()));
    }
    series
        .iter()
        .enumerate()
        .map(|(t, frame)| {
            ensure_same(roi.shape(), frame.shape())?;
            let sum: f64 = frame
                .data()
                .iter()
                .zip(roi.values())
                .filter(|(_, &m)| m)
                .map(|(&v, _)| v as f64)
                .sum();
            Ok((t, sum / n as f64))
        })
        .collect()
}

/// Sum of absolute frame-to-frame changes of a curve.
pub fn total_variation(curve: &[(usize, f64)]) -> f64 {
    curve.windows(2).map(|w| (w[1].1 - w[0].1).abs()).sum()
}
