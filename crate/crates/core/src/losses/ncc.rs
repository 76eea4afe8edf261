//! Global normalised cross-correlation loss: the negated Pearson
//! correlation of the two intensity sets.

use crate::error::Result;
use crate::volume::{ensure_same, Volume3D};

pub const NCC_EPS: f64 = 1e-8;

struct Moments {
    fc: Vec<f64>,
    wc: Vec<f64>,
    sfw: f64,
    sff: f64,
    sww: f64,
}

fn moments(f: &[f64], w: &[f64]) -> Moments {
    let n = f.len() as f64;
    let fm = f.iter().sum::<f64>() / n;
    let wm = w.iter().sum::<f64>() / n;
    let fc: Vec<f64> = f.iter().map(|v| v - fm).collect();
    let wc: Vec<f64> = w.iter().map(|v| v - wm).collect();
    let sfw = fc.iter().zip(&wc).map(|(a, b)| a * b).sum();
    let sff = fc.iter().map(|a| a * a).sum();
    let sww = wc.iter().map(|a| a * a).sum();
    Moments { fc, wc, sfw, sff, sww }
}

pub fn ncc_f64(f: &[f64], w: &[f64]) -> f64 {
    let m = moments(f, w);
    -m.sfw / (m.sff.sqrt() * m.sww.sqrt() + NCC_EPS)
}

/// Loss plus `scale * dL/d(.)` accumulated into the optional buffers.
pub fn ncc_backward(
    f: &[f64],
    w: &[f64],
    scale: f64,
    grad_f: Option<&mut [f64]>,
    grad_w: Option<&mut [f64]>,
) -> f64 {
    let m = moments(f, w);
    let (rf, rw) = (m.sff.sqrt(), m.sww.sqrt());
    let d = rf * rw + NCC_EPS;
    let loss = -m.sfw / d;
    // dL/dx_i = -(dSfw_i * d - Sfw * dD_i) / d^2
    let acc = |g: &mut [f64], own: &[f64], other: &[f64], r_own: f64, r_other: f64| {
        for i in 0..g.len() {
            let dd = if r_own > 0.0 { r_other * own[i] / r_own } else { 0.0 };
            g[i] += scale * -(other[i] * d - m.sfw * dd) / (d * d);
        }
    };
    if let Some(g) = grad_w {
        acc(g, &m.wc, &m.fc, rw, rf);
    }
    if let Some(g) = grad_f {
        acc(g, &m.fc, &m.wc, rf, rw);
    }
    loss
}

/// `-corr(fixed, warped)`, in `[-1, 1]`; zero when either input is constant.
pub fn ncc_loss(fixed: &Volume3D, warped: &Volume3D) -> Result<f64> {
    ensure_same(fixed.shape(), warped.shape())?;
    Ok(ncc_f64(&fixed.to_f64(), &warped.to_f64()))
}
