use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{NativeGeometry, Shape3, Spacing, Volume3D};

/// JSON header of the raw+json format.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawHeader {
    pub shape: Shape3,
    pub spacing: Spacing,
    pub dtype: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub native: Option<NativeGeometry>,
}

/// The data file belonging to a header: same stem, `.raw` extension.
pub fn raw_data_path(header: &Path) -> PathBuf {
    header.with_extension("raw")
}

pub fn read_raw_json(path: &Path) -> Result<Volume3D> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let header: RawHeader =
        serde_json::from_str(&text).map_err(|e| Error::header(path, e.to_string()))?;
    if header.dtype != "f32" {
        return Err(Error::header(
            path,
            format!("unsupported dtype {:?}, expected \"f32\"", header.dtype),
        ));
    }
    header
        .spacing
        .validate()
        .map_err(|e| Error::header(path, e.to_string()))?;
    let data_path = raw_data_path(path);
    let bytes = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let expected = header.shape.len() * 4;
    if bytes.len() != expected {
        return Err(Error::header(
            &data_path,
            format!(
                "buffer holds {} bytes, shape {} needs {expected}",
                bytes.len(),
                header.shape
            ),
        ));
    }
    let data = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    let mut vol = Volume3D::new(header.shape, header.spacing, data)?;
    vol.native = header.native;
    Ok(vol)
}

pub fn write_raw_json(vol: &Volume3D, path: &Path) -> Result<()> {
    let header = RawHeader {
        shape: vol.shape(),
        spacing: vol.spacing(),
        dtype: "f32".into(),
        native: vol.native,
    };
    let text = serde_json::to_string_pretty(&header)?;
    fs::write(path, text).map_err(|e| Error::io(path, e))?;
    let mut bytes = Vec::with_capacity(vol.data().len() * 4);
    for v in vol.data() {
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    let data_path = raw_data_path(path);
    fs::write(&data_path, bytes).map_err(|e| Error::io(&data_path, e))
}
