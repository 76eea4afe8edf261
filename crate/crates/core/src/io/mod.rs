//! Volume file formats: NIfTI-1 (`.nii`, `.nii.gz`) and a raw+json pair
//! (`name.json` header next to `name.raw` little-endian f32 data).

mod nifti1;
mod raw;

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{DisplacementField, Volume3D};

pub use nifti1::{read_nifti, write_nifti, NIFTI_HEADER_BYTES};
pub use raw::{raw_data_path, read_raw_json, write_raw_json, RawHeader};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum VolumeFormat {
    Nifti,
    RawJson,
}

impl VolumeFormat {
    /// Infers the format from a file name.
    pub fn from_path(path: &Path) -> Result<Self> {
        let name = path
            .file_name()
            .and_then(|n| n.to_str())
            .unwrap_or_default()
            .to_ascii_lowercase();
        if name.ends_with(".nii") || name.ends_with(".nii.gz") {
            Ok(VolumeFormat::Nifti)
        } else if name.ends_with(".json") {
            Ok(VolumeFormat::RawJson)
        } else {
            Err(Error::Format(format!(
                "cannot infer volume format from {}",
                path.display()
            )))
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            VolumeFormat::Nifti => "nii",
            VolumeFormat::RawJson => "json",
        }
    }
}

pub fn load_volume(path: impl AsRef<Path>, format: VolumeFormat) -> Result<Volume3D> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        ));
    }
    match format {
        VolumeFormat::Nifti => read_nifti(path),
        VolumeFormat::RawJson => read_raw_json(path),
    }
}

pub fn save_volume(vol: &Volume3D, path: impl AsRef<Path>, format: VolumeFormat) -> Result<()> {
    match format {
        VolumeFormat::Nifti => write_nifti(vol, path.as_ref()),
        VolumeFormat::RawJson => write_raw_json(vol, path.as_ref()),
    }
}

/// Writes the three displacement components as `<stem>_ux`, `_uy`, `_uz`
/// volumes next to `path`, returning the written paths.
pub fn save_displacement(
    ddf: &DisplacementField,
    vol_like: &Volume3D,
    dir: &Path,
    stem: &str,
    format: VolumeFormat,
) -> Result<Vec<std::path::PathBuf>> {
    let mut written = Vec::with_capacity(3);
    for (c, axis) in ["ux", "uy", "uz"].iter().enumerate() {
        let comp = vol_like.with_data(ddf.component(c).to_vec())?;
        let path = dir.join(format!("{stem}_{axis}.{}", format.extension()));
        save_volume(&comp, &path, format)?;
        written.push(path);
    }
    Ok(written)
}

pub fn load_displacement(paths: &[impl AsRef<Path>], format: VolumeFormat) -> Result<DisplacementField> {
    if paths.len() != 3 {
        return Err(Error::Format(format!(
            "a displacement field needs 3 component files, got {}",
            paths.len()
        )));
    }
    let comps = paths
        .iter()
        .map(|p| load_volume(p, format))
        .collect::<Result<Vec<_>>>()?;
    let shape = comps[0].shape();
    let mut data = Vec::with_capacity(3 * shape.len());
    for c in &comps {
        crate::volume::ensure_same(shape, c.shape())?;
        data.extend_from_slice(c.data());
    }
    DisplacementField::new(shape, data)
}
