//! Bookkeeping for files a command writes, so a failed command can take its
//! partial outputs back.

use std::fs;
use std::path::{Path, PathBuf};

use mareg_core::io::{save_volume, VolumeFormat};
use mareg_core::Volume3D;
use serde::Serialize;

use crate::error::{io_err, CliResult};

#[derive(Debug, Default)]
pub struct Outputs {
    files: Vec<PathBuf>,
    dirs: Vec<PathBuf>,
}

impl Outputs {
    pub fn dir(&mut self, path: &Path) -> CliResult<()> {
        if !path.exists() {
            // record the outermost missing ancestor first
            let mut missing = Vec::new();
            let mut p = Some(path);
            while let Some(d) = p.filter(|d| !d.as_os_str().is_empty() && !d.exists()) {
                missing.push(d.to_path_buf());
                p = d.parent();
            }
            fs::create_dir_all(path).map_err(|e| io_err(path, e))?;
            self.dirs.extend(missing.into_iter().rev());
        }
        Ok(())
    }

    /// Records `path` for rollback unless it predates this command.
    fn claim(&mut self, path: &Path) {
        if !path.exists() {
            self.files.push(path.to_path_buf());
        }
    }

    pub fn volume(&mut self, vol: &Volume3D, path: PathBuf, format: VolumeFormat) -> CliResult<PathBuf> {
        if format == VolumeFormat::RawJson {
            self.claim(&mareg_core::io::raw_data_path(&path));
        }
        self.claim(&path);
        save_volume(vol, &path, format)?;
        Ok(path)
    }

    pub fn json(&mut self, value: &impl Serialize, path: PathBuf) -> CliResult<PathBuf> {
        self.claim(&path);
        let text = serde_json::to_string_pretty(value)?;
        fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
        Ok(path)
    }

    /// Records files about to be written by someone else.
    pub fn expect(&mut self, files: impl IntoIterator<Item = PathBuf>) {
        for f in files {
            self.claim(&f);
        }
    }

    /// Deletes everything recorded, newest first.
    pub fn rollback(self) {
        for f in self.files.iter().rev() {
            let _ = fs::remove_file(f);
        }
        for d in self.dirs.iter().rev() {
            let _ = fs::remove_dir_all(d);
        }
    }
}
