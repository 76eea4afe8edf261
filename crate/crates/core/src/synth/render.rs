use rand::RngExt;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::filter::gaussian_blur;
use crate::volume::Volume3D;

use super::{rng, smooth_noise, sub_seed, uniform, LabelMap};

/// Ranges of the per-volume augmentations; a degenerate range `(a, a)`
/// fixes the value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RenderConfig {
    pub blur_sigma: (f64, f64),
    pub noise_sigma: (f64, f64),
    pub bias_range: (f64, f64),
    pub gamma: (f64, f64),
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig { blur_sigma: (0.5, 1.5), noise_sigma: (0.0, 0.05), bias_range: (0.8, 1.25), gamma: (0.5, 2.0) }
    }
}

impl RenderConfig {
    /// Piecewise-constant rendering with every augmentation switched off.
    pub fn plain() -> Self {
        RenderConfig { blur_sigma: (0.0, 0.0), noise_sigma: (0.0, 0.0), bias_range: (1.0, 1.0), gamma: (1.0, 1.0) }
    }
}

pub fn render_intensity(labels: &LabelMap, seed: u64, modality_seed: u64) -> Result<Volume3D> {
    render_with(labels, seed, modality_seed, &RenderConfig::default())
}

/// `modality_seed` picks the per-label means; `seed` drives blur, bias,
/// noise and contrast.
pub fn render_with(labels: &LabelMap, seed: u64, modality_seed: u64, cfg: &RenderConfig) -> Result<Volume3D> {
    let shape = labels.shape;
    let mut mr = rng(sub_seed(modality_seed, 1));
    let means: Vec<f64> = (0..labels.num_labels).map(|_| mr.random::<f64>()).collect();
    let mut r = rng(sub_seed(seed, modality_seed.wrapping_add(2)));
    let mut v: Vec<f64> = labels.labels.iter().map(|&l| means[l as usize]).collect();

    let blur = uniform(&mut r, cfg.blur_sigma);
    v = gaussian_blur(&v, shape, blur);

    let (lo, hi) = cfg.bias_range;
    if hi > lo {
        let field = smooth_noise(&mut r, shape, &[(32, 1.0)]);
        let (llo, lhi) = (lo.ln(), hi.ln());
        let mid = 0.5 * (llo + lhi);
        let half = 0.5 * (lhi - llo);
        for (x, b) in v.iter_mut().zip(field) {
            *x *= (mid + half * (b / 2.0).tanh()).exp();
        }
    } else {
        v.iter_mut().for_each(|x| *x *= lo);
    }

    let noise = uniform(&mut r, cfg.noise_sigma);
    if noise > 0.0 {
        for x in &mut v {
            *x += noise * r.sample::<f64, _>(StandardNormal);
        }
    }

    let (glo, ghi) = cfg.gamma;
    // log-uniform so that gamma and 1/gamma are equally likely
    let gamma = if ghi > glo { uniform(&mut r, (glo.ln(), ghi.ln())).exp() } else { glo };
    let data = v.into_iter().map(|x| x.clamp(0.0, 1.0).powf(gamma) as f32).collect();
    Volume3D::new(shape, Default::default(), data)
}
