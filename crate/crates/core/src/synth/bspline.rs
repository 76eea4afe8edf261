use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::volume::{DisplacementField, Shape3};

use super::rng;

/// Documented constant `c` in the smoothness bound
/// `max |forward difference| <= c * sigma / control_spacing`; it holds with
/// overwhelming probability for the Gaussian control points drawn here.
pub const SMOOTHNESS_CONSTANT: f64 = 8.0;

fn basis(t: f64) -> [f64; 4] {
    let s = 1.0 - t;
    [
        s * s * s / 6.0,
        (3.0 * t * t * t - 6.0 * t * t + 4.0) / 6.0,
        (-3.0 * t * t * t + 3.0 * t * t + 3.0 * t + 1.0) / 6.0,
        t * t * t / 6.0,
    ]
}

/// Interpolates one axis of a control lattice: `(ctrl index, weight)` taps
/// for every dense position.
fn taps(len: usize, spacing: usize) -> Vec<[(usize, f64); 4]> {
    (0..len)
        .map(|x| {
            let t = x as f64 / spacing as f64;
            let i = t.floor() as usize;
            let b = basis(t - i as f64);
            // lattice index i + k covers knots i - 1 + k, shifted by one so
            // indices stay non-negative
            [(i, b[0]), (i + 1, b[1]), (i + 2, b[2]), (i + 3, b[3])]
        })
        .collect()
}

/// Smooth random sampling field from a cubic B-spline over an i.i.d.
/// Gaussian control lattice with the given spacing (voxels).
pub fn random_bspline_ddf(seed: u64, shape: Shape3, control_spacing: usize, sigma: f64) -> Result<DisplacementField> {
    shape.check_positive()?;
    if control_spacing < 4 {
        return Err(Error::Config(format!("control_spacing must be >= 4, got {control_spacing}")));
    }
    if !(sigma >= 0.0 && sigma.is_finite()) {
        return Err(Error::Config(format!("sigma must be a non-negative number, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(DisplacementField::zeros(shape));
    }
    let dims = shape.dims();
    let cdims = dims.map(|d| (d - 1) / control_spacing + 4);
    let clen = cdims[0] * cdims[1] * cdims[2];
    let normal = Normal::new(0.0, sigma).expect("valid sigma");
    let mut r = rng(seed);
    let tx = taps(dims[0], control_spacing);
    let ty = taps(dims[1], control_spacing);
    let tz = taps(dims[2], control_spacing);
    let n = shape.len();
    let mut out = vec![0.0f64; 3 * n];
    for c in 0..3 {
        let ctrl: Vec<f64> = (0..clen).map(|_| normal.sample(&mut r)).collect();
        // separable evaluation: x, then y, then z
        let mut a = vec![0.0; dims[0] * cdims[1] * cdims[2]];
        for zy in 0..cdims[1] * cdims[2] {
            for (x, t) in tx.iter().enumerate() {
                a[zy * dims[0] + x] = t.iter().map(|&(i, w)| w * ctrl[zy * cdims[0] + i]).sum();
            }
        }
        let mut b = vec![0.0; dims[0] * dims[1] * cdims[2]];
        for z in 0..cdims[2] {
            for (y, t) in ty.iter().enumerate() {
                for x in 0..dims[0] {
                    b[(z * dims[1] + y) * dims[0] + x] =
                        t.iter().map(|&(j, w)| w * a[(z * cdims[1] + j) * dims[0] + x]).sum();
                }
            }
        }
        let plane = dims[0] * dims[1];
        for (z, t) in tz.iter().enumerate() {
            for xy in 0..plane {
                out[c * n + z * plane + xy] = t.iter().map(|&(k, w)| w * b[k * plane + xy]).sum();
            }
        }
    }
    DisplacementField::from_f64(shape, &out)
}
