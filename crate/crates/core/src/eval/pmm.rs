//! Patch-wise mutual information maps.
//!
//! Cubic patches on a stride lattice are intersected with the domain; each
//! patch with enough domain voxels gets a hard-binned plug-in MI, which is
//! scattered to its voxels and averaged by coverage.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{ensure_same, Mask3D, Shape3, Volume3D};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MiMeasure {
    /// Plain mutual information in nats.
    Mi,
    /// `2 I / (H_F + H_M)`.
    Nmi,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PmmConfig {
    pub patch: usize,
    pub stride: usize,
    pub bins: usize,
    pub min_fraction: f64,
    pub measure: MiMeasure,
}

impl Default for PmmConfig {
    fn default() -> Self {
        PmmConfig {
            patch: 16,
            stride: 4,
            bins: 32,
            min_fraction: 0.5,
            measure: MiMeasure::Mi,
        }
    }
}

impl PmmConfig {
    pub fn validate(&self, shape: Shape3) -> Result<()> {
        if self.patch == 0 || shape.dims().iter().any(|&d| self.patch > d) {
            return Err(Error::Config(format!("patch {} does not fit {shape}", self.patch)));
        }
        if self.stride == 0 {
            return Err(Error::Config("stride must be at least 1".into()));
        }
        if self.bins < 2 {
            return Err(Error::Config("bins must be at least 2".into()));
        }
        if !(0.0..=1.0).contains(&self.min_fraction) {
            return Err(Error::Config(format!("min_fraction {} outside [0, 1]", self.min_fraction)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug)]
pub struct MiMap {
    pub shape: Shape3,
    /// Averaged patch MI; zero where `mask` is false.
    pub values: Vec<f64>,
    /// Domain voxels covered by at least one qualifying patch.
    pub mask: Mask3D,
    /// Number of qualifying patches containing each voxel.
    pub coverage: Vec<u32>,
    pub patches: usize,
    pub config: PmmConfig,
}

impl MiMap {
    pub fn to_volume(&self) -> Volume3D {
        Volume3D::from_fn(self.shape, |x, y, z| self.values[self.shape.index(x, y, z)] as f32)
    }
}

/// Hard bin of an intensity clamped to `[0, 1]`.
#[inline]
pub fn hard_bin(v: f64, bins: usize) -> usize {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    ((v * bins as f64) as usize).min(bins - 1)
}

/// Plug-in MI (or NMI) of paired bin indices.
pub fn histogram_mi(a: &[usize], b: &[usize], bins: usize, measure: MiMeasure) -> f64 {
    let n = a.len();
    if n == 0 {
        return 0.0;
    }
    let mut joint = vec![0u32; bins * bins];
    let mut pa = vec![0u32; bins];
    let mut pb = vec![0u32; bins];
    for (&i, &j) in a.iter().zip(b) {
        joint[i * bins + j] += 1;
        pa[i] += 1;
        pb[j] += 1;
    }
    mi_from_counts(&joint, &pa, &pb, n, measure)
}

fn mi_from_counts(joint: &[u32], pa: &[u32], pb: &[u32], n: usize, measure: MiMeasure) -> f64 {
    let bins = pa.len();
    let nf = n as f64;
    let ent = |p: &[u32]| -> f64 {
        p.iter()
            .filter(|&&c| c > 0)
            .map(|&c| {
                let q = c as f64 / nf;
                -q * q.ln()
            })
            .sum()
    };
    let mut mi = 0.0;
    for i in 0..bins {
        if pa[i] == 0 {
            continue;
        }
        for j in 0..bins {
            let c = joint[i * bins + j];
            if c > 0 {
                let c = c as f64;
                mi += c / nf * (c * nf / (pa[i] as f64 * pb[j] as f64)).ln();
            }
        }
    }
    let mi = mi.max(0.0);
    match measure {
        MiMeasure::Mi => mi,
        MiMeasure::Nmi => {
            let h = ent(pa) + ent(pb);
            if h > 0.0 {
                2.0 * mi / h
            } else {
                0.0
            }
        }
    }
}

/// Lattice start positions along one axis.
pub fn lattice(dim: usize, patch: usize, stride: usize) -> impl Iterator<Item = usize> {
    (0..=dim - patch).step_by(stride)
}

pub fn patchwise_mi_map(fixed: &Volume3D, moving: &Volume3D, domain: Option<&Mask3D>, cfg: &PmmConfig) -> Result<MiMap> {
    let shape = fixed.shape();
    ensure_same(shape, moving.shape())?;
    if let Some(d) = domain {
        ensure_same(shape, d.shape())?;
    }
    cfg.validate(shape)?;
    let bins = cfg.bins;
    let fb: Vec<u16> = fixed.data().iter().map(|&v| hard_bin(v as f64, bins) as u16).collect();
    let mb: Vec<u16> = moving.data().iter().map(|&v| hard_bin(v as f64, bins) as u16).collect();
    let inside = |i: usize| domain.is_none_or(|d| d.values()[i]);
    let p = cfg.patch;
    let need = cfg.min_fraction * (p * p * p) as f64;

    let n = shape.len();
    let mut sum = vec![0.0; n];
    let mut coverage = vec![0u32; n];
    let mut joint = vec![0u32; bins * bins];
    let mut pa = vec![0u32; bins];
    let mut pb = vec![0u32; bins];
    let mut members = Vec::with_capacity(p * p * p);
    let mut patches = 0;
    for z0 in lattice(shape.nz, p, cfg.stride) {
        for y0 in lattice(shape.ny, p, cfg.stride) {
            for x0 in lattice(shape.nx, p, cfg.stride) {
                members.clear();
                for z in z0..z0 + p {
                    for y in y0..y0 + p {
                        let row = shape.index(x0, y, z);
                        members.extend((row..row + p).filter(|&i| inside(i)));
                    }
                }
                if members.is_empty() || (members.len() as f64) < need {
                    continue;
                }
                joint.fill(0);
                pa.fill(0);
                pb.fill(0);
                for &i in &members {
                    let (a, b) = (fb[i] as usize, mb[i] as usize);
                    joint[a * bins + b] += 1;
                    pa[a] += 1;
                    pb[b] += 1;
                }
                let mi = mi_from_counts(&joint, &pa, &pb, members.len(), cfg.measure);
                for &i in &members {
                    sum[i] += mi;
                    coverage[i] += 1;
                }
                patches += 1;
            }
        }
    }
    if patches == 0 {
        return Err(Error::Empty(format!(
            "no patch of size {p} holds {:.0} domain voxels",
            need.ceil()
        )));
    }
    let values = sum
        .iter()
        .zip(&coverage)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { 0.0 })
        .collect();
    let mask = Mask3D::new(shape, coverage.iter().map(|&c| c > 0).collect())?;
    Ok(MiMap {
        shape,
        values,
        mask,
        coverage,
        patches,
        config: *cfg,
    })
}

/// Mean of the map over `domain` (or over every defined voxel). Voxels
/// without patch coverage are left out.
pub fn mean_pmm(map: &MiMap, domain: Option<&Mask3D>) -> Result<f64> {
    if let Some(d) = domain {
        ensure_same(map.shape, d.shape())?;
    }
    let mut sum = 0.0;
    let mut count = 0usize;
    for i in 0..map.values.len() {
        if map.mask.values()[i] && domain.is_none_or(|d| d.values()[i]) {
            sum += map.values[i];
            count += 1;
        }
    }
    if count == 0 {
        return Err(Error::Empty("mean_pmm over an empty domain".into()));
    }
    Ok(sum / count as f64)
}

/// Per z-slice means of the defined map values; `None` for slices with none.
pub fn slice_means(map: &MiMap) -> Vec<Option<f64>> {
    let plane = map.shape.nx * map.shape.ny;
    (0..map.shape.nz)
        .map(|z| {
            let r = z * plane..(z + 1) * plane;
            let (s, c) = map.values[r.clone()]
                .iter()
                .zip(&map.mask.values()[r])
                .filter(|(_, &m)| m)
                .fold((0.0, 0usize), |(s, c), (v, _)| (s + v, c + 1));
            (c > 0).then(|| s / c as f64)
        })
        .collect()
}
