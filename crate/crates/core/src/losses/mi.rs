//! Differentiable mutual information from Gaussian (Parzen) soft-binned
//! joint histograms.
//!
//! Bin `k` of `bins` is centred at `k / (bins - 1)`, so the histogram spans
//! `[0, 1]` edge to edge and `v -> 1 - v` permutes bins exactly. Each sample
//! spreads unit mass over a window of bins around its nearest centre; the
//! window reaches six kernel widths, beyond which weights are below 1e-8 of
//! the peak.

use crate::error::{Error, Result};
use crate::volume::{ensure_same, Shape3, Volume3D};

use super::LossWeights;

pub const LOG_EPS: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SoftBinning {
    pub bins: usize,
    /// Kernel width in normalised-intensity units.
    pub sigma: f64,
}

impl SoftBinning {
    pub fn new(bins: usize, sigma: f64) -> Result<Self> {
        if bins < 2 {
            return Err(Error::Config(format!("need at least 2 bins, got {bins}")));
        }
        if !(sigma > 0.0 && sigma.is_finite()) {
            return Err(Error::Config(format!("parzen sigma must be positive, got {sigma}")));
        }
        Ok(SoftBinning { bins, sigma })
    }

    fn width(&self) -> f64 {
        1.0 / (self.bins - 1) as f64
    }

    fn radius(&self) -> usize {
        (6.0 * self.sigma / self.width()).ceil() as usize + 1
    }

    /// Normalised kernel weights of `v` and their derivative, written into
    /// `w`/`dw` starting at the returned first bin.
    fn weights(&self, v: f64, w: &mut [f64], dw: &mut [f64]) -> (usize, usize) {
        let width = self.width();
        let r = self.radius() as i64;
        let last = (self.bins - 1) as i64;
        let centre = ((v / width).round() as i64).clamp(0, last);
        let lo = (centre - r).max(0) as usize;
        let hi = (centre + r).min(last) as usize;
        let count = hi - lo + 1;
        let inv_var = 1.0 / (self.sigma * self.sigma);
        // shift exponents by the closest centre so far-away samples never
        // underflow to an all-zero window
        let dmin = v - centre as f64 * width;
        let mut sum = 0.0;
        let mut dsum = 0.0;
        for k in 0..count {
            let d = v - (lo + k) as f64 * width;
            let e = (-0.5 * (d * d - dmin * dmin) * inv_var).exp();
            w[k] = e;
            dw[k] = -d * inv_var * e;
            sum += e;
            dsum += dw[k];
        }
        for k in 0..count {
            dw[k] = (dw[k] - w[k] * dsum / sum) / sum;
            w[k] /= sum;
        }
        (lo, count)
    }
}

impl From<&LossWeights> for SoftBinning {
    fn from(cfg: &LossWeights) -> Self {
        SoftBinning {
            bins: cfg.bins,
            sigma: cfg.parzen_sigma,
        }
    }
}

/// Kernel windows of every sample, computed once and shared by all slices
/// and by the forward and backward passes.
struct Windows {
    span: usize,
    lo: Vec<u16>,
    count: Vec<u8>,
    w: Vec<f64>,
    dw: Vec<f64>,
}

impl Windows {
    fn new(v: &[f64], sb: SoftBinning) -> Windows {
        let span = 2 * sb.radius() + 1;
        let mut out = Windows {
            span,
            lo: vec![0; v.len()],
            count: vec![0; v.len()],
            w: vec![0.0; v.len() * span],
            dw: vec![0.0; v.len() * span],
        };
        for (p, &x) in v.iter().enumerate() {
            let r = p * span..(p + 1) * span;
            let (lo, c) = sb.weights(x, &mut out.w[r.clone()], &mut out.dw[r]);
            out.lo[p] = lo as u16;
            out.count[p] = c as u8;
        }
        out
    }

    #[inline]
    fn get(&self, p: usize) -> (usize, &[f64], &[f64]) {
        let c = self.count[p] as usize;
        let o = p * self.span;
        (self.lo[p] as usize, &self.w[o..o + c], &self.dw[o..o + c])
    }
}

struct SoftJoint {
    bins: usize,
    joint: Vec<f64>,
    pa: Vec<f64>,
    pb: Vec<f64>,
}

fn joint_of(bins: usize, wa: &Windows, wb: &Windows, idx: &[usize]) -> SoftJoint {
    let mut joint = vec![0.0; bins * bins];
    let inv_n = 1.0 / idx.len() as f64;
    for &p in idx {
        let (la, a, _) = wa.get(p);
        let (lb, b, _) = wb.get(p);
        for (i, &x) in a.iter().enumerate() {
            let start = (la + i) * bins + lb;
            let s = x * inv_n;
            for (cell, &w) in joint[start..start + b.len()].iter_mut().zip(b) {
                *cell += s * w;
            }
        }
    }
    let mut pa = vec![0.0; bins];
    let mut pb = vec![0.0; bins];
    for k in 0..bins {
        for l in 0..bins {
            let v = joint[k * bins + l];
            pa[k] += v;
            pb[l] += v;
        }
    }
    SoftJoint { bins, joint, pa, pb }
}

/// Accumulates `s * dMI/d(sample)` for the samples in `idx` given `g =
/// dMI/dP`.
#[allow(clippy::too_many_arguments)]
fn backprop(
    g: &[f64],
    bins: usize,
    wa: &Windows,
    wb: &Windows,
    idx: &[usize],
    s: f64,
    mut grad_a: Option<&mut [f64]>,
    mut grad_b: Option<&mut [f64]>,
) {
    for &p in idx {
        let (la, a, da) = wa.get(p);
        let (lb, b, db) = wb.get(p);
        let (mut ga, mut gb) = (0.0, 0.0);
        for i in 0..a.len() {
            let start = (la + i) * bins + lb;
            let row = &g[start..start + b.len()];
            let mut gw = 0.0;
            let mut gdw = 0.0;
            for k in 0..row.len() {
                gw += row[k] * b[k];
                gdw += row[k] * db[k];
            }
            ga += da[i] * gw;
            gb += a[i] * gdw;
        }
        if let Some(o) = grad_a.as_deref_mut() {
            o[p] += s * ga;
        }
        if let Some(o) = grad_b.as_deref_mut() {
            o[p] += s * gb;
        }
    }
}

fn soft_joint(a: &[f64], b: &[f64], sb: SoftBinning) -> SoftJoint {
    let idx: Vec<usize> = (0..a.len()).collect();
    joint_of(sb.bins, &Windows::new(a, sb), &Windows::new(b, sb), &idx)
}

impl SoftJoint {
    fn mi(&self) -> f64 {
        let bins = self.bins;
        let mut mi = 0.0;
        for k in 0..bins {
            for l in 0..bins {
                let p = self.joint[k * bins + l];
                if p > 0.0 {
                    mi += p * ((p + LOG_EPS).ln() - (self.pa[k] * self.pb[l] + LOG_EPS).ln());
                }
            }
        }
        mi
    }

    /// `d MI / d P_kl`.
    fn mi_grad(&self) -> Vec<f64> {
        let bins = self.bins;
        let (pa, pb, joint) = (&self.pa, &self.pb, &self.joint);
        let row_term: Vec<f64> = (0..bins)
            .map(|k| {
                (0..bins)
                    .map(|l| joint[k * bins + l] * pb[l] / (pa[k] * pb[l] + LOG_EPS))
                    .sum()
            })
            .collect();
        let col_term: Vec<f64> = (0..bins)
            .map(|l| {
                (0..bins)
                    .map(|k| joint[k * bins + l] * pa[k] / (pa[k] * pb[l] + LOG_EPS))
                    .sum()
            })
            .collect();
        let mut g = vec![0.0; bins * bins];
        for k in 0..bins {
            for l in 0..bins {
                let p = joint[k * bins + l];
                g[k * bins + l] = (p + LOG_EPS).ln() + p / (p + LOG_EPS)
                    - (pa[k] * pb[l] + LOG_EPS).ln()
                    - row_term[k]
                    - col_term[l];
            }
        }
        g
    }
}

fn check_pair(a: &[f64], b: &[f64]) -> Result<()> {
    if a.len() != b.len() || a.is_empty() {
        return Err(Error::Config(format!(
            "slice sizes differ or are empty: {} vs {}",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Soft-binned mutual information (nats) between two equally sized samples.
pub fn soft_mi_2d(a: &[f64], b: &[f64], sb: SoftBinning) -> Result<f64> {
    check_pair(a, b)?;
    SoftBinning::new(sb.bins, sb.sigma)?;
    Ok(soft_joint(a, b, sb).mi())
}

/// Entropy (nats) of the soft marginal histogram of `a`.
pub fn soft_entropy(a: &[f64], sb: SoftBinning) -> f64 {
    let j = soft_joint(a, a, sb);
    -j.pa.iter().map(|&p| p * (p + LOG_EPS).ln()).sum::<f64>()
}

/// MI with gradients: accumulates `scale * dMI/da` and `scale * dMI/db`.
pub fn soft_mi_2d_backward(
    a: &[f64],
    b: &[f64],
    sb: SoftBinning,
    scale: f64,
    grad_a: Option<&mut [f64]>,
    grad_b: Option<&mut [f64]>,
) -> f64 {
    let (wa, wb) = (Windows::new(a, sb), Windows::new(b, sb));
    let idx: Vec<usize> = (0..a.len()).collect();
    let j = joint_of(sb.bins, &wa, &wb, &idx);
    backprop(&j.mi_grad(), sb.bins, &wa, &wb, &idx, scale / a.len() as f64, grad_a, grad_b);
    j.mi()
}

/// Hard-binned plug-in MI (nats) over `[0, 1]` intensities.
pub fn hard_mi(a: &[f64], b: &[f64], bins: usize) -> f64 {
    let n = a.len() as f64;
    let bin = |v: f64| ((v.clamp(0.0, 1.0) * bins as f64) as usize).min(bins - 1);
    let mut joint = vec![0.0; bins * bins];
    for (&x, &y) in a.iter().zip(b) {
        joint[bin(x) * bins + bin(y)] += 1.0;
    }
    let mut pa = vec![0.0; bins];
    let mut pb = vec![0.0; bins];
    for k in 0..bins {
        for l in 0..bins {
            pa[k] += joint[k * bins + l];
            pb[l] += joint[k * bins + l];
        }
    }
    let mut mi = 0.0;
    for k in 0..bins {
        for l in 0..bins {
            let c = joint[k * bins + l];
            if c > 0.0 {
                mi += c / n * (c * n / (pa[k] * pb[l])).ln();
            }
        }
    }
    mi
}

/// Voxel indices of one axis-aligned slice, remaining axes in storage
/// order.
fn slice_indices(shape: Shape3, axis: usize, index: usize, out: &mut Vec<usize>) {
    out.clear();
    let [nx, ny, nz] = shape.dims();
    match axis {
        0 => {
            for z in 0..nz {
                for y in 0..ny {
                    out.push(shape.index(index, y, z));
                }
            }
        }
        1 => {
            for z in 0..nz {
                let base = shape.index(0, index, z);
                out.extend(base..base + nx);
            }
        }
        _ => {
            let base = index * nx * ny;
            out.extend(base..base + nx * ny);
        }
    }
}

/// Every axis-aligned slice pair as `(axis, index)`, in reduction order.
pub fn slice_plan(shape: Shape3) -> Vec<(usize, usize)> {
    (0..3)
        .flat_map(|axis| (0..shape.dims()[axis]).map(move |i| (axis, i)))
        .collect()
}

/// Per-slice MI values in [`slice_plan`] order.
pub fn slice_mis(fixed: &[f64], warped: &[f64], shape: Shape3, sb: SoftBinning) -> Vec<f64> {
    let (wa, wb) = (Windows::new(fixed, sb), Windows::new(warped, sb));
    let mut idx = Vec::new();
    slice_plan(shape)
        .into_iter()
        .map(|(axis, i)| {
            slice_indices(shape, axis, i, &mut idx);
            joint_of(sb.bins, &wa, &wb, &idx).mi()
        })
        .collect()
}

/// Negated mean slice MI over all slices along the three axes, on raw
/// `f64` grids.
pub fn multi_axis_mi_f64(fixed: &[f64], warped: &[f64], shape: Shape3, sb: SoftBinning) -> f64 {
    let mis = slice_mis(fixed, warped, shape, sb);
    -mis.iter().sum::<f64>() / mis.len() as f64
}

/// Loss value plus gradient (accumulated into the given buffers, scaled by
/// `scale`) with respect to either argument.
pub fn multi_axis_mi_backward(
    fixed: &[f64],
    warped: &[f64],
    shape: Shape3,
    sb: SoftBinning,
    scale: f64,
    mut grad_fixed: Option<&mut [f64]>,
    mut grad_warped: Option<&mut [f64]>,
) -> f64 {
    let plan = slice_plan(shape);
    let (wa, wb) = (Windows::new(fixed, sb), Windows::new(warped, sb));
    let norm = -scale / plan.len() as f64;
    let want = grad_fixed.is_some() || grad_warped.is_some();
    let mut idx = Vec::new();
    let mut total = 0.0;
    for (axis, i) in plan.iter().copied() {
        slice_indices(shape, axis, i, &mut idx);
        let j = joint_of(sb.bins, &wa, &wb, &idx);
        total += j.mi();
        if want {
            let s = norm / idx.len() as f64;
            backprop(&j.mi_grad(), sb.bins, &wa, &wb, &idx, s, grad_fixed.as_deref_mut(), grad_warped.as_deref_mut());
        }
    }
    -total / plan.len() as f64
}

/// Multi-axis MI loss between two volumes (lower is better).
pub fn multi_axis_mi(fixed: &Volume3D, warped: &Volume3D, cfg: &LossWeights) -> Result<f64> {
    ensure_same(fixed.shape(), warped.shape())?;
    let sb = SoftBinning::new(cfg.bins, cfg.parzen_sigma)?;
    Ok(multi_axis_mi_f64(&fixed.to_f64(), &warped.to_f64(), fixed.shape(), sb))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{RngExt, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn uniform(n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n).map(|_| rng.random::<f64>()).collect()
    }

    fn default_sb() -> SoftBinning {
        SoftBinning::from(&LossWeights::default())
    }

    #[test]
    fn weights_sum_to_one_and_derivatives_sum_to_zero() {
        let sb = default_sb();
        let r = 2 * sb.radius() + 1;
        let (mut w, mut dw) = (vec![0.0; r], vec![0.0; r]);
        for v in [0.0, 0.013, 0.5, 0.999, 1.0, -0.2, 1.7] {
            let (_, c) = sb.weights(v, &mut w, &mut dw);
            assert!((w[..c].iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(dw[..c].iter().sum::<f64>().abs() < 1e-9);
        }
    }

    #[test]
    fn independent_noise_has_small_mi() {
        let a = uniform(64 * 64, 1);
        let b = uniform(64 * 64, 2);
        let mi = soft_mi_2d(&a, &b, default_sb()).unwrap();
        assert!(mi < 0.05, "mi {mi}");
        assert!(mi >= -1e-6);
    }

    #[test]
    fn self_mi_bounded_by_soft_entropy() {
        // With Gaussian soft binning the self-joint is smeared off the
        // diagonal, so I(A;A) sits strictly below the marginal entropy.
        let a = uniform(32 * 32, 3);
        let sb = default_sb();
        let mi = soft_mi_2d(&a, &a, sb).unwrap();
        let h = soft_entropy(&a, sb);
        assert!(mi <= h + 1e-9);
        assert!(mi > 0.5 * h);
    }

    #[test]
    fn self_mi_equals_entropy_in_hard_limit() {
        // Intensities on bin centres with a narrow kernel: weights are
        // one-hot to double precision and I(A;A) = H(A).
        let sb = SoftBinning::new(8, 0.01).unwrap();
        let a: Vec<f64> = (0..200).map(|i| ((i * 7) % 8) as f64 / 7.0).collect();
        let mi = soft_mi_2d(&a, &a, sb).unwrap();
        let h = soft_entropy(&a, sb);
        assert!((mi - h).abs() < 1e-6, "{mi} vs {h}");
    }

    #[test]
    fn inversion_preserves_mi() {
        let a = uniform(40 * 40, 4);
        let inv: Vec<f64> = a.iter().map(|v| 1.0 - v).collect();
        let sb = default_sb();
        let m_self = soft_mi_2d(&a, &a, sb).unwrap();
        let m_inv = soft_mi_2d(&a, &inv, sb).unwrap();
        assert!((m_self - m_inv).abs() <= 0.02 * m_self);
        // the hard-binned oracle agrees on invariance
        let h_self = hard_mi(&a, &a, 32);
        let h_inv = hard_mi(&a, &inv, 32);
        assert!((h_self - h_inv).abs() <= 0.02 * h_self);
    }

    #[test]
    fn rejects_bad_inputs() {
        assert!(soft_mi_2d(&[0.1, 0.2], &[0.1], default_sb()).is_err());
        assert!(soft_mi_2d(&[0.1], &[0.1], SoftBinning { bins: 1, sigma: 0.1 }).is_err());
    }

    #[test]
    fn slice_count_is_sum_of_extents() {
        let s = Shape3::cube(16);
        assert_eq!(slice_plan(s).len(), 48);
        let s = Shape3::new(4, 5, 6);
        let f = uniform(s.len(), 9);
        let mis = slice_mis(&f, &f, s, default_sb());
        assert_eq!(mis.len(), 15);
        let loss = multi_axis_mi_f64(&f, &f, s, default_sb());
        assert!((loss + mis.iter().sum::<f64>() / 15.0).abs() < 1e-12);
    }

    #[test]
    fn backward_value_matches_forward() {
        let s = Shape3::new(5, 4, 6);
        let f = uniform(s.len(), 10);
        let w = uniform(s.len(), 11);
        let sb = default_sb();
        let v = multi_axis_mi_f64(&f, &w, s, sb);
        let mut g = vec![0.0; s.len()];
        let v2 = multi_axis_mi_backward(&f, &w, s, sb, 1.0, None, Some(&mut g));
        assert!((v - v2).abs() < 1e-12);
    }
}
