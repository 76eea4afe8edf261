//! Visual overlays as axial (z) slice stacks, written as PNG files.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};
use crate::volume::{ensure_same, Volume3D};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum PixelFormat {
    Gray,
    Rgb,
}

impl PixelFormat {
    pub fn channels(self) -> usize {
        match self {
            PixelFormat::Gray => 1,
            PixelFormat::Rgb => 3,
        }
    }
}

/// One 8-bit slice, row-major with `x` fastest.
#[derive(Clone, Debug, PartialEq)]
pub struct SliceImage {
    pub width: usize,
    pub height: usize,
    pub format: PixelFormat,
    pub pixels: Vec<u8>,
}

impl SliceImage {
    pub fn pixel(&self, x: usize, y: usize) -> &[u8] {
        let c = self.format.channels();
        let i = (y * self.width + x) * c;
        &self.pixels[i..i + c]
    }
}

/// Maps `[0, 1]` to `0..=255`, clamping.
pub fn to_byte(v: f32) -> u8 {
    let v = if v.is_nan() { 0.0 } else { v.clamp(0.0, 1.0) };
    (v * 255.0).round() as u8
}

/// Red = fixed, green = registered, blue = 0.
pub fn overlay_falsecolor(fixed: &Volume3D, registered: &Volume3D) -> Result<Vec<SliceImage>> {
    ensure_same(fixed.shape(), registered.shape())?;
    let s = fixed.shape();
    let plane = s.nx * s.ny;
    Ok((0..s.nz)
        .map(|z| {
            let r = z * plane..(z + 1) * plane;
            let pixels = fixed.data()[r.clone()]
                .iter()
                .zip(&registered.data()[r])
                .flat_map(|(&f, &m)| [to_byte(f), to_byte(m), 0])
                .collect();
            SliceImage { width: s.nx, height: s.ny, format: PixelFormat::Rgb, pixels }
        })
        .collect())
}

/// In-plane tiles of side `tile` alternate between the two images; tile
/// `(0, 0)` shows `fixed`.
pub fn overlay_checkerboard(fixed: &Volume3D, registered: &Volume3D, tile: usize) -> Result<Vec<SliceImage>> {
    ensure_same(fixed.shape(), registered.shape())?;
    if tile == 0 {
        return Err(Error::Config("checkerboard tile must be at least 1".into()));
    }
    let s = fixed.shape();
    Ok((0..s.nz)
        .map(|z| {
            let mut pixels = Vec::with_capacity(s.nx * s.ny);
            for y in 0..s.ny {
                for x in 0..s.nx {
                    let src = if (x / tile + y / tile).is_multiple_of(2) { fixed } else { registered };
                    pixels.push(to_byte(src.get(x, y, z)));
                }
            }
            SliceImage { width: s.nx, height: s.ny, format: PixelFormat::Gray, pixels }
        })
        .collect())
}

#[derive(Debug, Serialize)]
struct Manifest<'a> {
    kind: &'a str,
    axis: &'a str,
    format: PixelFormat,
    width: usize,
    height: usize,
    files: Vec<String>,
}

/// Writes `{prefix}_{z:04}.png` per slice plus `{prefix}_index.json`.
pub fn write_png_stack(dir: &Path, prefix: &str, slices: &[SliceImage]) -> Result<Vec<PathBuf>> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::with_capacity(slices.len());
    for (z, img) in slices.iter().enumerate() {
        let path = dir.join(format!("{prefix}_{z:04}.png"));
        let file = File::create(&path).map_err(|e| Error::io(&path, e))?;
        let mut enc = png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
        enc.set_color(match img.format {
            PixelFormat::Gray => png::ColorType::Grayscale,
            PixelFormat::Rgb => png::ColorType::Rgb,
        });
        enc.set_depth(png::BitDepth::Eight);
        let png_err = |e: png::EncodingError| Error::Format(format!("{}: {e}", path.display()));
        let mut w = enc.write_header().map_err(png_err)?;
        w.write_image_data(&img.pixels).map_err(png_err)?;
        w.finish().map_err(png_err)?;
        files.push(path);
    }
    let first = slices.first();
    let manifest = Manifest {
        kind: prefix,
        axis: "z",
        format: first.map_or(PixelFormat::Gray, |s| s.format),
        width: first.map_or(0, |s| s.width),
        height: first.map_or(0, |s| s.height),
        files: files
            .iter()
            .map(|p| p.file_name().unwrap_or_default().to_string_lossy().into_owned())
            .collect(),
    };
    let index = dir.join(format!("{prefix}_index.json"));
    fs::write(&index, serde_json::to_vec_pretty(&manifest)?).map_err(|e| Error::io(&index, e))?;
    Ok(files)
}
