//! Volumetric data model.
//!
//! All grids are stored x-fastest: the linear index of voxel `(x, y, z)` is
//! `x + nx * (y + ny * z)`. Axis 0 is called H, axis 1 W and axis 2 D in
//! user-facing shapes, so a shape printed as `(H, W, D)` lists the axes in
//! storage order from fastest to slowest.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Grid extent along the three axes, fastest axis first.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(from = "[usize; 3]", into = "[usize; 3]")]
pub struct Shape3 {
    pub nx: usize,
    pub ny: usize,
    pub nz: usize,
}

impl From<[usize; 3]> for Shape3 {
    fn from([nx, ny, nz]: [usize; 3]) -> Self {
        Shape3 { nx, ny, nz }
    }
}

impl From<Shape3> for [usize; 3] {
    fn from(s: Shape3) -> Self {
        s.dims()
    }
}

impl fmt::Display for Shape3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.nx, self.ny, self.nz)
    }
}

impl Shape3 {
    pub const fn new(nx: usize, ny: usize, nz: usize) -> Self {
        Shape3 { nx, ny, nz }
    }

    pub const fn cube(n: usize) -> Self {
        Shape3 {
            nx: n,
            ny: n,
            nz: n,
        }
    }

    pub const fn dims(&self) -> [usize; 3] {
        [self.nx, self.ny, self.nz]
    }

    pub const fn len(&self) -> usize {
        self.nx * self.ny * self.nz
    }

    pub const fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Element distance between neighbours along `axis`.
    pub const fn stride(&self, axis: usize) -> usize {
        match axis {
            0 => 1,
            1 => self.nx,
            _ => self.nx * self.ny,
        }
    }

    #[inline]
    pub const fn index(&self, x: usize, y: usize, z: usize) -> usize {
        x + self.nx * (y + self.ny * z)
    }

    #[inline]
    pub const fn coords(&self, i: usize) -> (usize, usize, usize) {
        let x = i % self.nx;
        let r = i / self.nx;
        (x, r % self.ny, r / self.ny)
    }

    pub fn halved(&self) -> Shape3 {
        Shape3::new(self.nx / 2, self.ny / 2, self.nz / 2)
    }

    pub fn doubled(&self) -> Shape3 {
        Shape3::new(self.nx * 2, self.ny * 2, self.nz * 2)
    }

    pub fn check_positive(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Geometry(format!("shape {self} has an empty axis")));
        }
        Ok(())
    }
}

pub(crate) fn ensure_same(expected: Shape3, actual: Shape3) -> Result<()> {
    if expected != actual {
        return Err(Error::ShapeMismatch { expected, actual });
    }
    Ok(())
}

/// Voxel spacing in millimetres.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Spacing(pub [f64; 3]);

impl Default for Spacing {
    fn default() -> Self {
        Spacing([1.0; 3])
    }
}

impl From<[f64; 3]> for Spacing {
    fn from(v: [f64; 3]) -> Self {
        Spacing(v)
    }
}

impl From<Spacing> for [f64; 3] {
    fn from(s: Spacing) -> Self {
        s.0
    }
}

impl Spacing {
    pub fn validate(&self) -> Result<()> {
        if self.0.iter().all(|s| s.is_finite() && *s > 0.0) {
            Ok(())
        } else {
            Err(Error::Geometry(format!(
                "spacing {:?} must be strictly positive",
                self.0
            )))
        }
    }
}

/// Geometry of a volume before it was brought onto a network-friendly grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NativeGeometry {
    pub shape: Shape3,
    pub spacing: Spacing,
}

/// Scalar intensity volume.
#[derive(Clone, Debug, PartialEq)]
pub struct Volume3D {
    shape: Shape3,
    spacing: Spacing,
    data: Vec<f32>,
    /// Geometry prior to `pad_or_resample_for_network`, if any.
    pub native: Option<NativeGeometry>,
    /// Opaque orientation metadata carried through NIfTI round trips
    /// (the 3x4 `srow` affine).
    pub orientation: Option<[[f32; 4]; 3]>,
}

impl Volume3D {
    pub fn new(shape: Shape3, spacing: Spacing, data: Vec<f32>) -> Result<Self> {
        shape.check_positive()?;
        spacing.validate()?;
        if data.len() != shape.len() {
            return Err(Error::BufferLength {
                shape,
                len: data.len(),
                expected: shape.len(),
            });
        }
        Ok(Volume3D {
            shape,
            spacing,
            data,
            native: None,
            orientation: None,
        })
    }

    pub fn zeros(shape: Shape3) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: Shape3, value: f32) -> Self {
        Volume3D {
            shape,
            spacing: Spacing::default(),
            data: vec![value; shape.len()],
            native: None,
            orientation: None,
        }
    }

    pub fn from_fn(shape: Shape3, mut f: impl FnMut(usize, usize, usize) -> f32) -> Self {
        let mut data = Vec::with_capacity(shape.len());
        for z in 0..shape.nz {
            for y in 0..shape.ny {
                for x in 0..shape.nx {
                    data.push(f(x, y, z));
                }
            }
        }
        Volume3D {
            shape,
            spacing: Spacing::default(),
            data,
            native: None,
            orientation: None,
        }
    }

    pub fn with_spacing(mut self, spacing: Spacing) -> Result<Self> {
        spacing.validate()?;
        self.spacing = spacing;
        Ok(self)
    }

    /// Same geometry and metadata, new intensities.
    pub fn with_data(&self, data: Vec<f32>) -> Result<Self> {
        if data.len() != self.shape.len() {
            return Err(Error::BufferLength {
                shape: self.shape,
                len: data.len(),
                expected: self.shape.len(),
            });
        }
        Ok(Volume3D {
            shape: self.shape,
            spacing: self.spacing,
            data,
            native: self.native,
            orientation: self.orientation,
        })
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn spacing(&self) -> Spacing {
        self.spacing
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> f32 {
        self.data[self.shape.index(x, y, z)]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn min_max(&self) -> (f32, f32) {
        self.data
            .iter()
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.data.iter().map(|&v| v as f64).sum::<f64>() / self.data.len() as f64
    }

    /// Affine min-max rescale to `[0, 1]`. A constant volume maps to zero.
    pub fn normalize_intensity(&self) -> Volume3D {
        let (lo, hi) = self.min_max();
        let range = hi as f64 - lo as f64;
        let data = if range > 0.0 && range.is_finite() {
            self.data
                .iter()
                .map(|&v| ((v as f64 - lo as f64) / range) as f32)
                .collect()
        } else {
            vec![0.0; self.data.len()]
        };
        Volume3D {
            data,
            ..self.clone()
        }
    }

    /// Axis-aligned 2D slice: fixed `index` along `axis`, the remaining two
    /// axes in storage order.
    pub fn slice(&self, axis: usize, index: usize) -> (usize, usize, Vec<f32>) {
        let [nx, ny, nz] = self.shape.dims();
        let (a, b) = slice_dims(self.shape, axis);
        let mut out = Vec::with_capacity(a * b);
        match axis {
            0 => {
                for z in 0..nz {
                    for y in 0..ny {
                        out.push(self.get(index, y, z));
                    }
                }
            }
            1 => {
                for z in 0..nz {
                    for x in 0..nx {
                        out.push(self.get(x, index, z));
                    }
                }
            }
            _ => {
                let base = index * nx * ny;
                out.extend_from_slice(&self.data[base..base + nx * ny]);
            }
        }
        (a, b, out)
    }
}

/// In-plane extents `(fast, slow)` of slices orthogonal to `axis`.
pub fn slice_dims(shape: Shape3, axis: usize) -> (usize, usize) {
    match axis {
        0 => (shape.ny, shape.nz),
        1 => (shape.nx, shape.nz),
        _ => (shape.nx, shape.ny),
    }
}

/// Binary voxel mask.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Mask3D {
    shape: Shape3,
    values: Vec<bool>,
}

impl Mask3D {
    pub fn new(shape: Shape3, values: Vec<bool>) -> Result<Self> {
        if values.len() != shape.len() {
            return Err(Error::BufferLength {
                shape,
                len: values.len(),
                expected: shape.len(),
            });
        }
        Ok(Mask3D { shape, values })
    }

    pub fn full(shape: Shape3) -> Self {
        Mask3D {
            shape,
            values: vec![true; shape.len()],
        }
    }

    pub fn empty(shape: Shape3) -> Self {
        Mask3D {
            shape,
            values: vec![false; shape.len()],
        }
    }

    pub fn from_fn(shape: Shape3, mut f: impl FnMut(usize, usize, usize) -> bool) -> Self {
        let mut values = Vec::with_capacity(shape.len());
        for z in 0..shape.nz {
            for y in 0..shape.ny {
                for x in 0..shape.nx {
                    values.push(f(x, y, z));
                }
            }
        }
        Mask3D { shape, values }
    }

    /// Voxels whose intensity exceeds `threshold`.
    pub fn from_volume(vol: &Volume3D, threshold: f32) -> Self {
        Mask3D {
            shape: vol.shape(),
            values: vol.data().iter().map(|&v| v > threshold).collect(),
        }
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn values(&self) -> &[bool] {
        &self.values
    }

    pub fn get(&self, x: usize, y: usize, z: usize) -> bool {
        self.values[self.shape.index(x, y, z)]
    }

    pub fn count(&self) -> usize {
        self.values.iter().filter(|&&v| v).count()
    }

    pub fn to_volume(&self) -> Volume3D {
        Volume3D {
            shape: self.shape,
            spacing: Spacing::default(),
            data: self.values.iter().map(|&v| v as u8 as f32).collect(),
            native: None,
            orientation: None,
        }
    }
}

/// Dense voxel-wise displacement field `u`, in voxel units.
///
/// The transform is `phi(x) = x + u(x)`: the value at fixed-grid voxel `x`
/// is sampled from the moving image at `x + u(x)`. Components are stored
/// planar, `[ux..., uy..., uz...]`, each plane in volume order.
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementField {
    shape: Shape3,
    data: Vec<f32>,
}

impl DisplacementField {
    pub fn zeros(shape: Shape3) -> Self {
        DisplacementField {
            shape,
            data: vec![0.0; 3 * shape.len()],
        }
    }

    pub fn new(shape: Shape3, data: Vec<f32>) -> Result<Self> {
        if data.len() != 3 * shape.len() {
            return Err(Error::BufferLength {
                shape,
                len: data.len(),
                expected: 3 * shape.len(),
            });
        }
        Ok(DisplacementField { shape, data })
    }

    pub fn from_f64(shape: Shape3, data: &[f64]) -> Result<Self> {
        Self::new(shape, data.iter().map(|&v| v as f32).collect())
    }

    pub fn constant(shape: Shape3, v: [f32; 3]) -> Self {
        let n = shape.len();
        let mut data = Vec::with_capacity(3 * n);
        for c in v {
            data.extend(std::iter::repeat_n(c, n));
        }
        DisplacementField { shape, data }
    }

    pub fn from_fn(shape: Shape3, mut f: impl FnMut(usize, usize, usize) -> [f32; 3]) -> Self {
        let n = shape.len();
        let mut data = vec![0.0; 3 * n];
        for z in 0..shape.nz {
            for y in 0..shape.ny {
                for x in 0..shape.nx {
                    let i = shape.index(x, y, z);
                    let v = f(x, y, z);
                    for c in 0..3 {
                        data[c * n + i] = v[c];
                    }
                }
            }
        }
        DisplacementField { shape, data }
    }

    pub fn shape(&self) -> Shape3 {
        self.shape
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f32] {
        &mut self.data
    }

    pub fn component(&self, c: usize) -> &[f32] {
        let n = self.shape.len();
        &self.data[c * n..(c + 1) * n]
    }

    pub fn vector(&self, i: usize) -> [f32; 3] {
        let n = self.shape.len();
        [self.data[i], self.data[n + i], self.data[2 * n + i]]
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn magnitudes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.shape.len()).map(move |i| {
            let [a, b, c] = self.vector(i);
            ((a as f64).powi(2) + (b as f64).powi(2) + (c as f64).powi(2)).sqrt()
        })
    }

    pub fn mean_magnitude(&self) -> f64 {
        self.magnitudes().sum::<f64>() / self.shape.len() as f64
    }

    pub fn max_magnitude(&self) -> f64 {
        self.magnitudes().fold(0.0, f64::max)
    }

    /// Mean Euclidean distance between corresponding vectors.
    pub fn mean_endpoint_error(&self, other: &DisplacementField) -> Result<f64> {
        ensure_same(self.shape, other.shape)?;
        let n = self.shape.len();
        let total: f64 = (0..n)
            .map(|i| {
                let a = self.vector(i);
                let b = other.vector(i);
                (0..3)
                    .map(|c| (a[c] as f64 - b[c] as f64).powi(2))
                    .sum::<f64>()
                    .sqrt()
            })
            .sum();
        Ok(total / n as f64)
    }
}
