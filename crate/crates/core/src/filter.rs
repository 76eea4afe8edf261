//! Separable smoothing on volume-ordered buffers.

use crate::volume::Shape3;

/// Normalised Gaussian taps truncated at 3 sigma.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return vec![1.0];
    }
    let r = (3.0 * sigma).ceil() as isize;
    let mut k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Convolves along one axis with replicate borders.
pub fn convolve_axis(f: &[f64], shape: Shape3, axis: usize, kernel: &[f64]) -> Vec<f64> {
    let len = shape.dims()[axis];
    let stride = shape.stride(axis);
    let r = (kernel.len() / 2) as isize;
    let mut out = vec![0.0; f.len()];
    for (i, o) in out.iter_mut().enumerate() {
        let pos = (i / stride) % len;
        let base = i - pos * stride;
        *o = kernel
            .iter()
            .enumerate()
            .map(|(k, w)| {
                let p = (pos as isize + k as isize - r).clamp(0, len as isize - 1) as usize;
                w * f[base + p * stride]
            })
            .sum();
    }
    out
}

pub fn gaussian_blur(f: &[f64], shape: Shape3, sigma: f64) -> Vec<f64> {
    if sigma <= 0.0 {
        return f.to_vec();
    }
    let k = gaussian_kernel(sigma);
    let mut g = f.to_vec();
    for axis in 0..3 {
        g = convolve_axis(&g, shape, axis, &k);
    }
    g
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blur_preserves_constants_and_mass_in_interior() {
        let shape = Shape3::new(9, 7, 5);
        let c = vec![0.7; shape.len()];
        for v in gaussian_blur(&c, shape, 1.3) {
            assert!((v - 0.7).abs() < 1e-12);
        }
        let mut spike = vec![0.0; shape.len()];
        spike[shape.index(4, 3, 2)] = 1.0;
        let b = gaussian_blur(&spike, shape, 0.6);
        assert!((b.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(b[shape.index(4, 3, 2)] < 1.0);
        assert!((b[shape.index(3, 3, 2)] - b[shape.index(5, 3, 2)]).abs() < 1e-15);
    }

    #[test]
    fn zero_sigma_is_identity() {
        let shape = Shape3::cube(3);
        let f: Vec<f64> = (0..27).map(|i| i as f64).collect();
        assert_eq!(gaussian_blur(&f, shape, 0.0), f);
    }
}
