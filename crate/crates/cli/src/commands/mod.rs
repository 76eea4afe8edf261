mod evaluate;
mod register;
mod synthesize;
mod train;

use std::path::{Path, PathBuf};

use mareg_core::io::{load_volume, VolumeFormat};
use mareg_core::Volume3D;

use crate::error::{CliError, CliResult};
use crate::outputs::Outputs;

pub use evaluate::{evaluate, EvaluateArgs};
pub use register::{register, FrameSummary, RegisterArgs};
pub use synthesize::{synthesize, Manifest, PairEntry};
pub use train::{distill, train_teacher, TrainSummary};

pub(crate) fn read_volume(path: &Path) -> CliResult<Volume3D> {
    if !path.exists() {
        return Err(CliError::user(format!("input not found: {}", path.display())));
    }
    Ok(load_volume(path, VolumeFormat::from_path(path)?)?)
}

pub(crate) fn file_name(format: VolumeFormat, stem: &str) -> String {
    format!("{stem}.{}", format.extension())
}

/// Runs `body`, deleting whatever it recorded in `Outputs` if it fails.
pub(crate) fn transactional<T>(body: impl FnOnce(&mut Outputs) -> CliResult<T>) -> CliResult<T> {
    let mut outputs = Outputs::default();
    match body(&mut outputs) {
        Ok(v) => Ok(v),
        Err(e) => {
            outputs.rollback();
            Err(e)
        }
    }
}

pub(crate) fn relative(path: &Path, base: &Path) -> String {
    path.strip_prefix(base).unwrap_or(path).to_string_lossy().into_owned()
}

/// Volume files of a directory, sorted by name.
pub(crate) fn volumes_in(dir: &Path) -> CliResult<Vec<PathBuf>> {
    let entries = std::fs::read_dir(dir).map_err(|e| crate::error::io_err(dir, e))?;
    let mut out: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && VolumeFormat::from_path(p).is_ok())
        .collect();
    out.sort();
    if out.is_empty() {
        return Err(CliError::user(format!("no volumes in {}", dir.display())));
    }
    Ok(out)
}
