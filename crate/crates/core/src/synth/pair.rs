use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{DisplacementField, Shape3, Volume3D};

use super::{random_bspline_ddf, render_with, sample_label_map, sub_seed, LabelMap, RenderConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub num_labels: usize,
    /// B-spline control point spacing in voxels.
    pub control_spacing: usize,
    /// Standard deviation of control point displacements in voxels.
    pub sigma: f64,
    pub render: RenderConfig,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        GeneratorConfig { num_labels: 8, control_spacing: 8, sigma: 2.0, render: RenderConfig::default() }
    }
}

/// `gt_ddf` is a sampling field on the fixed grid: `warp(moving, gt_ddf)`
/// reproduces the fixed anatomy.
#[derive(Clone, Debug, PartialEq)]
pub struct SyntheticPair {
    pub fixed: Volume3D,
    pub moving: Volume3D,
    pub gt_ddf: DisplacementField,
    pub fixed_labels: LabelMap,
    pub moving_labels: LabelMap,
    pub seed: u64,
}

fn clamp_point(shape: Shape3, p: [f64; 3]) -> [f64; 3] {
    let d = shape.dims();
    [0, 1, 2].map(|a| p[a].clamp(0.0, (d[a] - 1) as f64))
}

/// Trilinear sample of all three components with border replication.
fn sample_vector(u: &[f64], shape: Shape3, p: [f64; 3]) -> [f64; 3] {
    let n = shape.len();
    let p = clamp_point(shape, p);
    let d = shape.dims();
    let lo = p.map(|v| v.floor() as usize);
    let hi = [0, 1, 2].map(|a| (lo[a] + 1).min(d[a] - 1));
    let t = [0, 1, 2].map(|a| p[a] - lo[a] as f64);
    let mut out = [0.0; 3];
    for c in 0..8 {
        let pick = |a: usize| if (c >> a) & 1 == 1 { (hi[a], t[a]) } else { (lo[a], 1.0 - t[a]) };
        let ((x, wx), (y, wy), (z, wz)) = (pick(0), pick(1), pick(2));
        let w = wx * wy * wz;
        if w == 0.0 {
            continue;
        }
        let i = shape.index(x, y, z);
        for k in 0..3 {
            out[k] += w * u[k * n + i];
        }
    }
    out
}

/// Fixed-point inverse of a sampling field: `v(y) = -u(y + v(y))`, so that
/// composing the two is close to the identity where `u` is smooth and small.
pub fn invert_field(u: &DisplacementField, iters: usize) -> DisplacementField {
    let shape = u.shape();
    let n = shape.len();
    let uf = u.to_f64();
    let mut v: Vec<f64> = uf.iter().map(|x| -x).collect();
    for _ in 0..iters {
        let mut next = vec![0.0; 3 * n];
        for i in 0..n {
            let (x, y, z) = shape.coords(i);
            let p = [x as f64 + v[i], y as f64 + v[n + i], z as f64 + v[2 * n + i]];
            let s = sample_vector(&uf, shape, p);
            for k in 0..3 {
                next[k * n + i] = -s[k];
            }
        }
        v = next;
    }
    DisplacementField::from_f64(shape, &v).expect("length matches shape")
}

/// Nearest-neighbour pull-back of a label map with border replication.
fn pull_labels(labels: &LabelMap, v: &DisplacementField) -> LabelMap {
    let shape = labels.shape;
    let out = (0..shape.len())
        .map(|i| {
            let (x, y, z) = shape.coords(i);
            let d = v.vector(i);
            let p = clamp_point(shape, [x as f64 + d[0] as f64, y as f64 + d[1] as f64, z as f64 + d[2] as f64]);
            labels.labels[shape.index(p[0].round() as usize, p[1].round() as usize, p[2].round() as usize)]
        })
        .collect();
    LabelMap { shape, labels: out, num_labels: labels.num_labels }
}

pub fn generate_pair(seed: u64, shape: Shape3, cfg: &GeneratorConfig) -> Result<SyntheticPair> {
    if shape.dims().iter().any(|&d| d == 0 || d % 16 != 0) {
        return Err(Error::Geometry(format!("synthetic shape {shape} must be a positive multiple of 16")));
    }
    let fixed_labels = sample_label_map(sub_seed(seed, 10), shape, cfg.num_labels)?;
    let gt_ddf = random_bspline_ddf(sub_seed(seed, 11), shape, cfg.control_spacing, cfg.sigma)?;
    let moving_labels = if cfg.sigma == 0.0 {
        fixed_labels.clone()
    } else {
        pull_labels(&fixed_labels, &invert_field(&gt_ddf, 12))
    };
    let fixed = render_with(&fixed_labels, sub_seed(seed, 12), sub_seed(seed, 13), &cfg.render)?;
    let moving = render_with(&moving_labels, sub_seed(seed, 14), sub_seed(seed, 15), &cfg.render)?;
    Ok(SyntheticPair { fixed, moving, gt_ddf, fixed_labels, moving_labels, seed })
}
