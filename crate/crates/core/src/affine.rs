//! Minimal NCC-driven affine pre-alignment.
//!
//! The transform maps fixed-grid voxel `x` to `A (x - c) + c + t`, with `c`
//! the grid centre. It is optimised as the displacement `u = M q + t` where
//! `q = (x - c) / R` and `A = I + M / R`, which puts all twelve parameters on
//! a common voxel scale.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::gaussian_blur;
use crate::losses::ncc::{ncc_backward, ncc_f64};
use crate::nn::{Adam, AdamConfig};
use crate::volume::{ensure_same, DisplacementField, Shape3, Volume3D};
use crate::warp::{warp_backward, warp_f64};

/// Row-major linear part followed by the translation, in voxels.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AffineParams(pub [f64; 12]);

impl AffineParams {
    pub const IDENTITY: AffineParams = AffineParams([1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0]);

    pub fn linear(&self) -> [[f64; 3]; 3] {
        let p = &self.0;
        [[p[0], p[1], p[2]], [p[3], p[4], p[5]], [p[6], p[7], p[8]]]
    }

    pub fn translation(&self) -> [f64; 3] {
        [self.0[9], self.0[10], self.0[11]]
    }

    /// The equivalent dense sampling field.
    pub fn to_displacement(&self, shape: Shape3) -> DisplacementField {
        DisplacementField::from_f64(shape, &self.field(shape)).expect("length matches shape")
    }

    fn field(&self, shape: Shape3) -> Vec<f64> {
        let n = shape.len();
        let c = centre(shape);
        let a = self.linear();
        let t = self.translation();
        let mut u = vec![0.0; 3 * n];
        for i in 0..n {
            let (x, y, z) = shape.coords(i);
            let d = [x as f64 - c[0], y as f64 - c[1], z as f64 - c[2]];
            for r in 0..3 {
                let lin: f64 = (0..3).map(|k| a[r][k] * d[k]).sum();
                u[r * n + i] = lin - d[r] + t[r];
            }
        }
        u
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AffineConfig {
    pub iters: usize,
    pub learning_rate: f64,
    /// Blur levels, coarse to fine; iterations are split evenly.
    pub blur_sigmas: Vec<f64>,
}

impl Default for AffineConfig {
    fn default() -> Self {
        AffineConfig { iters: 150, learning_rate: 0.1, blur_sigmas: vec![2.0, 1.0, 0.0] }
    }
}

#[derive(Clone, Debug)]
pub struct AffineResult {
    pub warped: Volume3D,
    pub params: AffineParams,
    pub ncc_before: f64,
    pub ncc_after: f64,
}

fn centre(shape: Shape3) -> [f64; 3] {
    shape.dims().map(|d| (d as f64 - 1.0) / 2.0)
}

fn radius(shape: Shape3) -> f64 {
    shape.dims().iter().map(|&d| (d as f64 - 1.0) / 2.0).fold(1.0, f64::max)
}

/// Unit-scale parameters `[M (row-major), t]` to [`AffineParams`].
fn to_params(theta: &[f64; 12], r: f64) -> AffineParams {
    let mut p = AffineParams::IDENTITY;
    for k in 0..9 {
        p.0[k] += theta[k] / r;
    }
    p.0[9..].copy_from_slice(&theta[9..]);
    p
}

pub fn affine_prealign(fixed: &Volume3D, moving: &Volume3D, iters: usize) -> Result<AffineResult> {
    affine_prealign_with(fixed, moving, &AffineConfig { iters, ..AffineConfig::default() })
}

pub fn affine_prealign_with(fixed: &Volume3D, moving: &Volume3D, cfg: &AffineConfig) -> Result<AffineResult> {
    ensure_same(fixed.shape(), moving.shape())?;
    let shape = fixed.shape();
    let n = shape.len();
    let r = radius(shape);
    let c = centre(shape);
    let q: Vec<[f64; 3]> = (0..n)
        .map(|i| {
            let (x, y, z) = shape.coords(i);
            [(x as f64 - c[0]) / r, (y as f64 - c[1]) / r, (z as f64 - c[2]) / r]
        })
        .collect();
    let f = fixed.to_f64();
    let m = moving.to_f64();
    let ncc_before = ncc_f64(&f, &m);

    let field = |theta: &[f64; 12]| to_params(theta, r).field(shape);
    let mut theta = [0.0f64; 12];
    let mut best = (ncc_before, theta);
    let levels = cfg.blur_sigmas.len().max(1);
    let mut step = 0;
    for (level, &sigma) in cfg.blur_sigmas.iter().enumerate() {
        let fb = gaussian_blur(&f, shape, sigma);
        let mb = gaussian_blur(&m, shape, sigma);
        let count = cfg.iters / levels + usize::from(level < cfg.iters % levels);
        let mut opt = Adam::new(12, AdamConfig::default());
        for _ in 0..count {
            let u = field(&theta);
            let warped = warp_f64(&mb, shape, &u);
            let mut gw = vec![0.0; n];
            let loss = ncc_backward(&fb, &warped, 1.0, None, Some(&mut gw));
            if !loss.is_finite() {
                return Err(Error::NonFinite { stage: "affine", step });
            }
            let mut gu = vec![0.0; 3 * n];
            warp_backward(&mb, shape, &u, &gw, None, Some(&mut gu));
            let mut g = [0.0f64; 12];
            for i in 0..n {
                for a in 0..3 {
                    let v = gu[a * n + i];
                    for b in 0..3 {
                        g[a * 3 + b] += v * q[i][b];
                    }
                    g[9 + a] += v;
                }
            }
            opt.step(&mut theta, &g, cfg.learning_rate);
            step += 1;
        }
        let full = ncc_f64(&f, &warp_f64(&m, shape, &field(&theta)));
        if !full.is_finite() {
            return Err(Error::NonFinite { stage: "affine", step });
        }
        if full < best.0 {
            best = (full, theta);
        }
    }
    let params = to_params(&best.1, r);
    let warped = warp_f64(&m, shape, &params.field(shape));
    Ok(AffineResult {
        warped: moving.with_data(warped.iter().map(|&v| v as f32).collect())?,
        params,
        ncc_before,
        ncc_after: best.0,
    })
}
