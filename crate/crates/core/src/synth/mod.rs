//! Synthetic multi-modal training pairs with known deformations.
//!
//! Pipeline: smooth random label map, random B-spline sampling field,
//! per-label random intensity rendering of the undeformed map (fixed) and of
//! the map pulled back through the inverse field (moving), each with its own
//! intensity assignment so the two look like different modalities.

mod bspline;
mod labels;
mod pair;
mod render;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::resample::{resize, Interpolation};
use crate::volume::Shape3;

pub use bspline::{random_bspline_ddf, SMOOTHNESS_CONSTANT};
pub use labels::{sample_label_map, LabelMap};
pub use pair::{generate_pair, invert_field, GeneratorConfig, SyntheticPair};
pub use render::{render_intensity, render_with, RenderConfig};

/// Decorrelated child seed for a named sub-stream.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub(crate) fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Smooth zero-mean noise: Gaussian values on coarse grids with roughly one
/// node per `cell` voxels, trilinearly upsampled and summed with weights.
pub(crate) fn smooth_noise(rng: &mut ChaCha8Rng, shape: Shape3, scales: &[(usize, f64)]) -> Vec<f64> {
    let mut out = vec![0.0; shape.len()];
    for &(cell, weight) in scales {
        let coarse = Shape3::from(shape.dims().map(|d| d.div_ceil(cell) + 1));
        let values: Vec<f32> = (0..coarse.len()).map(|_| rng.sample::<f64, _>(StandardNormal) as f32).collect();
        let up = resize(&values, coarse, shape, Interpolation::Trilinear);
        for (o, v) in out.iter_mut().zip(up) {
            *o += weight * v as f64;
        }
    }
    out
}

pub(crate) fn uniform(rng: &mut ChaCha8Rng, range: (f64, f64)) -> f64 {
    if range.1 <= range.0 {
        return range.0;
    }
    range.0 + (range.1 - range.0) * rng.random::<f64>()
}
