//! Trilinear warping `out(x) = moving(x + u(x))` with zero padding outside
//! the grid, and its adjoint with respect to both the image and the field.

use crate::error::Result;
use crate::volume::{ensure_same, DisplacementField, Shape3, Volume3D};

/// Corner indices and weights of a trilinear sample; out-of-grid corners
/// carry `None`.
#[derive(Clone, Copy)]
struct Stencil {
    idx: [Option<usize>; 8],
    /// Fractional offsets inside the cell.
    t: [f64; 3],
}

#[inline]
fn stencil(shape: Shape3, p: [f64; 3]) -> Stencil {
    let dims = shape.dims();
    let mut base = [0i64; 3];
    let mut t = [0.0; 3];
    for a in 0..3 {
        let f = p[a].floor();
        base[a] = f as i64;
        t[a] = p[a] - f;
    }
    let mut idx = [None; 8];
    for (c, slot) in idx.iter_mut().enumerate() {
        let x = base[0] + (c & 1) as i64;
        let y = base[1] + ((c >> 1) & 1) as i64;
        let z = base[2] + ((c >> 2) & 1) as i64;
        if x >= 0 && y >= 0 && z >= 0 && (x as usize) < dims[0] && (y as usize) < dims[1] && (z as usize) < dims[2] {
            *slot = Some(shape.index(x as usize, y as usize, z as usize));
        }
    }
    Stencil { idx, t }
}

#[inline]
fn corner_weight(c: usize, t: [f64; 3]) -> f64 {
    let w = |bit: usize, t: f64| if bit == 1 { t } else { 1.0 - t };
    w(c & 1, t[0]) * w((c >> 1) & 1, t[1]) * w((c >> 2) & 1, t[2])
}

#[inline]
fn sample_point(shape: Shape3, u: &[f64], i: usize) -> [f64; 3] {
    let n = shape.len();
    let (x, y, z) = shape.coords(i);
    [
        x as f64 + u[i],
        y as f64 + u[n + i],
        z as f64 + u[2 * n + i],
    ]
}

/// Samples `img` at an arbitrary continuous position with zero padding.
pub fn sample_trilinear(img: &[f64], shape: Shape3, p: [f64; 3]) -> f64 {
    let s = stencil(shape, p);
    (0..8)
        .filter_map(|c| s.idx[c].map(|j| corner_weight(c, s.t) * img[j]))
        .sum()
}

/// Warps a scalar grid by a planar displacement field (`u.len() == 3 * n`).
pub fn warp_f64(moving: &[f64], shape: Shape3, u: &[f64]) -> Vec<f64> {
    let n = shape.len();
    debug_assert_eq!(moving.len(), n);
    debug_assert_eq!(u.len(), 3 * n);
    (0..n)
        .map(|i| sample_trilinear(moving, shape, sample_point(shape, u, i)))
        .collect()
}

/// Accumulates the adjoint of [`warp_f64`]: given `d loss / d out`, adds the
/// gradient with respect to the moving image and/or the displacement.
pub fn warp_backward(
    moving: &[f64],
    shape: Shape3,
    u: &[f64],
    grad_out: &[f64],
    mut grad_moving: Option<&mut [f64]>,
    mut grad_u: Option<&mut [f64]>,
) {
    let n = shape.len();
    for i in 0..n {
        let g = grad_out[i];
        if g == 0.0 {
            continue;
        }
        let s = stencil(shape, sample_point(shape, u, i));
        if let Some(gm) = grad_moving.as_deref_mut() {
            for c in 0..8 {
                if let Some(j) = s.idx[c] {
                    gm[j] += g * corner_weight(c, s.t);
                }
            }
        }
        if let Some(gu) = grad_u.as_deref_mut() {
            let mut d = [0.0; 3];
            for c in 0..8 {
                let Some(j) = s.idx[c] else { continue };
                let v = moving[j];
                let bits = [c & 1, (c >> 1) & 1, (c >> 2) & 1];
                for a in 0..3 {
                    // derivative of the corner weight along axis a
                    let mut w = if bits[a] == 1 { 1.0 } else { -1.0 };
                    for b in 0..3 {
                        if b != a {
                            w *= if bits[b] == 1 { s.t[b] } else { 1.0 - s.t[b] };
                        }
                    }
                    d[a] += w * v;
                }
            }
            for a in 0..3 {
                gu[a * n + i] += g * d[a];
            }
        }
    }
}

/// `moving` resampled at `x + u(x)` for every voxel of the fixed grid.
pub fn warp(moving: &Volume3D, u: &DisplacementField) -> Result<Volume3D> {
    ensure_same(moving.shape(), u.shape())?;
    let out = warp_f64(&moving.to_f64(), moving.shape(), &u.to_f64());
    moving.with_data(out.into_iter().map(|v| v as f32).collect())
}

/// Nearest-neighbour warp for label volumes; out-of-grid samples get
/// `background`.
pub fn warp_nearest<T: Copy>(labels: &[T], shape: Shape3, u: &DisplacementField, background: T) -> Vec<T> {
    let n = shape.len();
    let uf = u.data();
    let dims = shape.dims();
    (0..n)
        .map(|i| {
            let (x, y, z) = shape.coords(i);
            let p = [
                (x as f64 + uf[i] as f64).round(),
                (y as f64 + uf[n + i] as f64).round(),
                (z as f64 + uf[2 * n + i] as f64).round(),
            ];
            if (0..3).all(|a| p[a] >= 0.0 && (p[a] as usize) < dims[a]) {
                labels[shape.index(p[0] as usize, p[1] as usize, p[2] as usize)]
            } else {
                background
            }
        })
        .collect()
}
