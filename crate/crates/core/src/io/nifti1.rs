//! Minimal NIfTI-1 single-file reader/writer.
//!
//! Only geometry (dims, pixdim) and the sform rows are interpreted; other
//! orientation fields are ignored on read and written as identity.

use std::fs;
use std::io::{Read, Write};
use std::path::Path;

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;

use crate::error::{Error, Result};
use crate::volume::{Shape3, Spacing, Volume3D};

pub const NIFTI_HEADER_BYTES: usize = 352;

const DT_UINT8: i16 = 2;
const DT_INT16: i16 = 4;
const DT_INT32: i16 = 8;
const DT_FLOAT32: i16 = 16;
const DT_FLOAT64: i16 = 64;
const DT_INT8: i16 = 256;
const DT_UINT16: i16 = 512;
const DT_UINT32: i16 = 768;

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("gz"))
}

struct Reader<'a> {
    buf: &'a [u8],
    big_endian: bool,
}

impl Reader<'_> {
    fn bytes<const N: usize>(&self, off: usize) -> [u8; N] {
        let mut b = [0u8; N];
        b.copy_from_slice(&self.buf[off..off + N]);
        if self.big_endian {
            b.reverse();
        }
        b
    }
    fn i16(&self, off: usize) -> i16 {
        i16::from_le_bytes(self.bytes(off))
    }
    fn i32(&self, off: usize) -> i32 {
        i32::from_le_bytes(self.bytes(off))
    }
    fn f32(&self, off: usize) -> f32 {
        f32::from_le_bytes(self.bytes(off))
    }
}

pub fn read_nifti(path: &Path) -> Result<Volume3D> {
    let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
    let buf = if is_gz(path) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        out
    } else {
        raw
    };
    if buf.len() < 348 {
        return Err(Error::header(path, "file shorter than a NIfTI-1 header"));
    }
    let big_endian = match i32::from_le_bytes([buf[0], buf[1], buf[2], buf[3]]) {
        348 => false,
        _ if i32::from_be_bytes([buf[0], buf[1], buf[2], buf[3]]) == 348 => true,
        other => return Err(Error::header(path, format!("sizeof_hdr is {other}, not 348"))),
    };
    if &buf[344..347] != b"n+1" && &buf[344..347] != b"ni1" {
        return Err(Error::header(path, "missing NIfTI-1 magic"));
    }
    let r = Reader {
        buf: &buf,
        big_endian,
    };
    let ndim = r.i16(40);
    if !(3..=7).contains(&ndim) {
        return Err(Error::header(path, format!("dim[0] = {ndim}, need a 3D volume")));
    }
    let dims: Vec<i16> = (1..=ndim as usize).map(|i| r.i16(40 + 2 * i)).collect();
    if dims.iter().any(|&d| d < 1) || dims[3..].iter().any(|&d| d != 1) {
        return Err(Error::header(path, format!("unsupported dims {dims:?}")));
    }
    let shape = Shape3::new(dims[0] as usize, dims[1] as usize, dims[2] as usize);
    let spacing = Spacing([
        r.f32(80).abs() as f64,
        r.f32(84).abs() as f64,
        r.f32(88).abs() as f64,
    ]);
    spacing
        .validate()
        .map_err(|e| Error::header(path, e.to_string()))?;
    let datatype = r.i16(70);
    let vox_offset = r.f32(108) as usize;
    let slope = r.f32(112);
    let inter = r.f32(116);
    let width = match datatype {
        DT_UINT8 | DT_INT8 => 1,
        DT_INT16 | DT_UINT16 => 2,
        DT_INT32 | DT_UINT32 | DT_FLOAT32 => 4,
        DT_FLOAT64 => 8,
        other => return Err(Error::header(path, format!("unsupported datatype {other}"))),
    };
    let n = shape.len();
    let start = vox_offset.max(348);
    if buf.len() < start + n * width {
        return Err(Error::header(
            path,
            format!(
                "data section holds {} bytes, shape {shape} needs {}",
                buf.len().saturating_sub(start),
                n * width
            ),
        ));
    }
    let body = Reader {
        buf: &buf[start..],
        big_endian,
    };
    let mut data: Vec<f32> = (0..n)
        .map(|i| {
            let o = i * width;
            match datatype {
                DT_UINT8 => body.buf[o] as f32,
                DT_INT8 => body.buf[o] as i8 as f32,
                DT_INT16 => body.i16(o) as f32,
                DT_UINT16 => u16::from_le_bytes(body.bytes(o)) as f32,
                DT_INT32 => body.i32(o) as f32,
                DT_UINT32 => u32::from_le_bytes(body.bytes(o)) as f32,
                DT_FLOAT32 => body.f32(o),
                _ => f64::from_le_bytes(body.bytes(o)) as f32,
            }
        })
        .collect();
    if slope != 0.0 && slope.is_finite() && (slope != 1.0 || inter != 0.0) {
        for v in &mut data {
            *v = *v * slope + inter;
        }
    }
    let mut vol = Volume3D::new(shape, spacing, data)?;
    if r.i16(254) > 0 {
        let mut srow = [[0f32; 4]; 3];
        for (row, vals) in srow.iter_mut().enumerate() {
            for (col, v) in vals.iter_mut().enumerate() {
                *v = r.f32(280 + 16 * row + 4 * col);
            }
        }
        vol.orientation = Some(srow);
    }
    Ok(vol)
}

fn encode_header(vol: &Volume3D) -> Vec<u8> {
    let mut h = vec![0u8; NIFTI_HEADER_BYTES];
    let put = |h: &mut Vec<u8>, off: usize, b: &[u8]| h[off..off + b.len()].copy_from_slice(b);
    put(&mut h, 0, &348i32.to_le_bytes());
    h[38] = b'r';
    let s = vol.shape();
    let dims = [3i16, s.nx as i16, s.ny as i16, s.nz as i16, 1, 1, 1, 1];
    for (i, d) in dims.iter().enumerate() {
        put(&mut h, 40 + 2 * i, &d.to_le_bytes());
    }
    put(&mut h, 70, &DT_FLOAT32.to_le_bytes());
    put(&mut h, 72, &32i16.to_le_bytes());
    let sp = vol.spacing().0;
    let pixdim = [1.0f32, sp[0] as f32, sp[1] as f32, sp[2] as f32, 0.0, 0.0, 0.0, 0.0];
    for (i, p) in pixdim.iter().enumerate() {
        put(&mut h, 76 + 4 * i, &p.to_le_bytes());
    }
    put(&mut h, 108, &(NIFTI_HEADER_BYTES as f32).to_le_bytes());
    put(&mut h, 112, &1.0f32.to_le_bytes());
    // spatial units: millimetres
    h[123] = 2;
    let srow = vol.orientation.unwrap_or([
        [sp[0] as f32, 0.0, 0.0, 0.0],
        [0.0, sp[1] as f32, 0.0, 0.0],
        [0.0, 0.0, sp[2] as f32, 0.0],
    ]);
    put(&mut h, 252, &1i16.to_le_bytes());
    put(&mut h, 254, &1i16.to_le_bytes());
    for (row, vals) in srow.iter().enumerate() {
        for (col, v) in vals.iter().enumerate() {
            put(&mut h, 280 + 16 * row + 4 * col, &v.to_le_bytes());
        }
    }
    put(&mut h, 344, b"n+1\0");
    h
}

pub fn write_nifti(vol: &Volume3D, path: &Path) -> Result<()> {
    for d in vol.shape().dims() {
        if d > i16::MAX as usize {
            return Err(Error::Format(format!("dimension {d} exceeds NIfTI-1 limits")));
        }
    }
    let mut bytes = encode_header(vol);
    bytes.reserve(vol.data().len() * 4);
    for v in vol.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    if is_gz(path) {
        let file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        let mut enc = GzEncoder::new(file, Compression::default());
        enc.write_all(&bytes).map_err(|e| Error::io(path, e))?;
        enc.finish().map_err(|e| Error::io(path, e))?;
        Ok(())
    } else {
        fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }
}
