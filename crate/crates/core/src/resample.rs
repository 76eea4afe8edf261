//! Bringing volumes onto grids whose extents are multiples of 16, and back.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{DisplacementField, NativeGeometry, Shape3, Spacing, Volume3D};

pub const NETWORK_MULTIPLE: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FitMode {
    /// Interpolate onto the nearest multiple of 16 along each axis.
    Resample,
    /// Zero-pad (centred) up to the next multiple of 16.
    Pad,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Interpolation {
    Trilinear,
    Nearest,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResampleRecord {
    pub original_shape: Shape3,
    pub original_spacing: Spacing,
    pub resampled_shape: Shape3,
    pub method: Interpolation,
    pub mode: FitMode,
    /// Voxels inserted before the data along each axis (pad mode).
    pub offset: [usize; 3],
}

impl ResampleRecord {
    pub fn is_identity(&self) -> bool {
        self.original_shape == self.resampled_shape
    }
}

/// Nearest multiple of 16, ties rounding up, never below 16.
pub fn nearest_multiple(n: usize) -> usize {
    (((n + NETWORK_MULTIPLE / 2) / NETWORK_MULTIPLE) * NETWORK_MULTIPLE).max(NETWORK_MULTIPLE)
}

/// Smallest multiple of 16 that is `>= n`.
pub fn next_multiple(n: usize) -> usize {
    n.div_ceil(NETWORK_MULTIPLE).max(1) * NETWORK_MULTIPLE
}

pub fn pad_or_resample_for_network(vol: &Volume3D, mode: FitMode) -> (Volume3D, ResampleRecord) {
    fit_with(vol, mode, Interpolation::Trilinear)
}

/// As [`pad_or_resample_for_network`] but with explicit interpolation, e.g.
/// nearest-neighbour for label volumes.
pub fn fit_with(vol: &Volume3D, mode: FitMode, method: Interpolation) -> (Volume3D, ResampleRecord) {
    let shape = vol.shape();
    let pick = match mode {
        FitMode::Resample => nearest_multiple,
        FitMode::Pad => next_multiple,
    };
    let target = Shape3::new(pick(shape.nx), pick(shape.ny), pick(shape.nz));
    let offset = match mode {
        FitMode::Pad => [
            (target.nx - shape.nx) / 2,
            (target.ny - shape.ny) / 2,
            (target.nz - shape.nz) / 2,
        ],
        FitMode::Resample => [0; 3],
    };
    let record = ResampleRecord {
        original_shape: shape,
        original_spacing: vol.spacing(),
        resampled_shape: target,
        method,
        mode,
        offset,
    };
    let native = Some(vol.native.unwrap_or(NativeGeometry {
        shape,
        spacing: vol.spacing(),
    }));
    if target == shape {
        let mut out = vol.clone();
        out.native = native;
        return (out, record);
    }
    let (data, spacing) = match mode {
        FitMode::Pad => (pad(vol.data(), shape, target, offset), vol.spacing()),
        FitMode::Resample => (
            resize(vol.data(), shape, target, method),
            resized_spacing(vol.spacing(), shape, target),
        ),
    };
    let mut out = Volume3D::new(target, spacing, data).expect("target geometry is valid");
    out.native = native;
    out.orientation = vol.orientation;
    (out, record)
}

pub fn restore_native(vol: &Volume3D, rec: &ResampleRecord) -> Result<Volume3D> {
    if vol.shape() != rec.resampled_shape {
        return Err(Error::ShapeMismatch {
            expected: rec.resampled_shape,
            actual: vol.shape(),
        });
    }
    let data = match rec.mode {
        _ if rec.is_identity() => vol.data().to_vec(),
        FitMode::Pad => crop(vol.data(), rec.resampled_shape, rec.original_shape, rec.offset),
        FitMode::Resample => resize(vol.data(), rec.resampled_shape, rec.original_shape, rec.method),
    };
    let mut out = Volume3D::new(rec.original_shape, rec.original_spacing, data)?;
    out.orientation = vol.orientation;
    Ok(out)
}

/// Maps a displacement field computed on the network grid back onto the
/// native grid. Resampled components are rescaled so they stay in native
/// voxel units.
pub fn restore_displacement(ddf: &DisplacementField, rec: &ResampleRecord) -> Result<DisplacementField> {
    if ddf.shape() != rec.resampled_shape {
        return Err(Error::ShapeMismatch {
            expected: rec.resampled_shape,
            actual: ddf.shape(),
        });
    }
    if rec.is_identity() {
        return Ok(ddf.clone());
    }
    let src = rec.resampled_shape;
    let dst = rec.original_shape;
    let mut data = Vec::with_capacity(3 * dst.len());
    for c in 0..3 {
        let comp = ddf.component(c);
        match rec.mode {
            FitMode::Pad => data.extend(crop(comp, src, dst, rec.offset)),
            FitMode::Resample => {
                let scale = axis_scale(dst.dims()[c], src.dims()[c]);
                data.extend(
                    resize(comp, src, dst, Interpolation::Trilinear)
                        .into_iter()
                        .map(|v| (v as f64 * scale) as f32),
                );
            }
        }
    }
    DisplacementField::new(dst, data)
}

/// Voxel-unit conversion factor from a grid of `from` samples to one of
/// `to` samples spanning the same extent (corner-aligned).
fn axis_scale(to: usize, from: usize) -> f64 {
    if from > 1 && to > 1 {
        (to - 1) as f64 / (from - 1) as f64
    } else {
        1.0
    }
}

fn resized_spacing(sp: Spacing, from: Shape3, to: Shape3) -> Spacing {
    let f = from.dims();
    let t = to.dims();
    Spacing(std::array::from_fn(|a| sp.0[a] * axis_scale(f[a], t[a])))
}

fn pad(src: &[f32], from: Shape3, to: Shape3, off: [usize; 3]) -> Vec<f32> {
    let mut out = vec![0.0; to.len()];
    for z in 0..from.nz {
        for y in 0..from.ny {
            let s = from.index(0, y, z);
            let d = to.index(off[0], y + off[1], z + off[2]);
            out[d..d + from.nx].copy_from_slice(&src[s..s + from.nx]);
        }
    }
    out
}

fn crop(src: &[f32], from: Shape3, to: Shape3, off: [usize; 3]) -> Vec<f32> {
    let mut out = Vec::with_capacity(to.len());
    for z in 0..to.nz {
        for y in 0..to.ny {
            let s = from.index(off[0], y + off[1], z + off[2]);
            out.extend_from_slice(&src[s..s + to.nx]);
        }
    }
    out
}

/// Corner-aligned resize along all three axes.
pub fn resize(src: &[f32], from: Shape3, to: Shape3, method: Interpolation) -> Vec<f32> {
    let f = from.dims();
    let t = to.dims();
    // Per-axis sample tables: (lower index, upper index, upper weight).
    let tables: Vec<Vec<(usize, usize, f64)>> = (0..3)
        .map(|a| {
            let scale = axis_scale(f[a], t[a]);
            (0..t[a])
                .map(|i| {
                    let p = (i as f64 * scale).clamp(0.0, (f[a] - 1) as f64);
                    match method {
                        Interpolation::Nearest => {
                            let k = p.round() as usize;
                            (k, k, 0.0)
                        }
                        Interpolation::Trilinear => {
                            let lo = p.floor() as usize;
                            let hi = (lo + 1).min(f[a] - 1);
                            (lo, hi, p - lo as f64)
                        }
                    }
                })
                .collect()
        })
        .collect();
    let mut out = Vec::with_capacity(to.len());
    for &(z0, z1, wz) in &tables[2] {
        for &(y0, y1, wy) in &tables[1] {
            for &(x0, x1, wx) in &tables[0] {
                let g = |x, y, z| src[from.index(x, y, z)] as f64;
                let c00 = g(x0, y0, z0) * (1.0 - wx) + g(x1, y0, z0) * wx;
                let c10 = g(x0, y1, z0) * (1.0 - wx) + g(x1, y1, z0) * wx;
                let c01 = g(x0, y0, z1) * (1.0 - wx) + g(x1, y0, z1) * wx;
                let c11 = g(x0, y1, z1) * (1.0 - wx) + g(x1, y1, z1) * wx;
                let c0 = c00 * (1.0 - wy) + c10 * wy;
                let c1 = c01 * (1.0 - wy) + c11 * wy;
                out.push((c0 * (1.0 - wz) + c1 * wz) as f32);
            }
        }
    }
    out
}
