//! Checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! b"MAREGCK1"            magic
//! u32                    header length in bytes
//! header                 UTF-8 JSON, see `CheckpointHeader`
//! data                   concatenated tensor blobs
//! [u8; 32]               SHA-256 of every preceding byte
//! ```

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

use super::network::{NetworkConfig, NetworkMode, RegistrationNetwork, TensorInfo};
use super::scalar::Scalar;

const MAGIC: &[u8; 8] = b"MAREGCK1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub version: u32,
    pub config: NetworkConfig,
    pub mode: NetworkMode,
    pub seed: u64,
    pub dtype: String,
    pub tensors: Vec<TensorInfo>,
}

pub fn encode_checkpoint<T: Scalar>(net: &RegistrationNetwork<T>) -> Vec<u8> {
    let header = CheckpointHeader {
        version: FORMAT_VERSION,
        config: net.config().clone(),
        mode: net.mode(),
        seed: net.seed(),
        dtype: T::DTYPE.to_string(),
        tensors: net.tensors().to_vec(),
    };
    let json = serde_json::to_vec(&header).expect("header serialises");
    let mut out = Vec::with_capacity(8 + 4 + json.len() + net.param_count() * T::BYTES + 32);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(json.len() as u32).to_le_bytes());
    out.extend_from_slice(&json);
    for &p in net.params() {
        p.write_le(&mut out);
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

fn split(bytes: &[u8]) -> Result<(CheckpointHeader, &[u8])> {
    let bad = |m: &str| Error::Checkpoint(m.to_string());
    if bytes.len() < 8 + 4 + 32 || &bytes[..8] != MAGIC {
        return Err(bad("not a checkpoint file (bad magic)"));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != trailer {
        return Err(bad("checksum mismatch, file is corrupt"));
    }
    let hlen = u32::from_le_bytes(body[8..12].try_into().expect("4 bytes")) as usize;
    let json = body.get(12..12 + hlen).ok_or_else(|| bad("truncated header"))?;
    let header: CheckpointHeader =
        serde_json::from_slice(json).map_err(|e| Error::Checkpoint(format!("bad header: {e}")))?;
    if header.version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {}", header.version)));
    }
    Ok((header, &body[12 + hlen..]))
}

pub fn decode_checkpoint<T: Scalar>(bytes: &[u8], expected: Option<&NetworkConfig>) -> Result<RegistrationNetwork<T>> {
    let (header, data) = split(bytes)?;
    if let Some(cfg) = expected {
        if *cfg != header.config {
            return Err(Error::Checkpoint(format!(
                "config mismatch: checkpoint holds {}, expected {}",
                serde_json::to_string(&header.config)?,
                serde_json::to_string(cfg)?
            )));
        }
    }
    if header.dtype != T::DTYPE {
        return Err(Error::Checkpoint(format!("dtype {} cannot be loaded as {}", header.dtype, T::DTYPE)));
    }
    if data.len() % T::BYTES != 0 {
        return Err(Error::Checkpoint("data section is not a whole number of scalars".into()));
    }
    let params: Vec<T> = data.chunks_exact(T::BYTES).map(T::read_le).collect();
    let net = RegistrationNetwork::from_parts(header.config, header.mode, header.seed, params)?;
    if net.tensors() != header.tensors.as_slice() {
        return Err(Error::Checkpoint("tensor table does not match the config".into()));
    }
    Ok(net)
}

pub fn save_checkpoint<T: Scalar>(net: &RegistrationNetwork<T>, path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, encode_checkpoint(net)).map_err(|e| Error::io(path, e))
}

/// Loads a checkpoint; with `expected` set, a different stored config is an
/// error.
pub fn load_checkpoint(path: &Path, expected: Option<&NetworkConfig>) -> Result<RegistrationNetwork<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, expected)
}

pub fn read_checkpoint_header(path: &Path) -> Result<CheckpointHeader> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(split(&bytes)?.0)
}
