use std::fs::{self, File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub mean_loss: f64,
    pub wall_seconds: f64,
}

/// Per-epoch records, mirrored to an append-only JSON-lines file if a path
/// is set.
#[derive(Debug, Default)]
pub struct TrainingLog {
    pub records: Vec<EpochRecord>,
    sink: Option<(PathBuf, File)>,
}

impl TrainingLog {
    pub fn new(path: Option<&Path>) -> Result<Self> {
        let sink = match path {
            None => None,
            Some(p) => {
                if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
                }
                let f = OpenOptions::new().create(true).append(true).open(p).map_err(|e| Error::io(p, e))?;
                Some((p.to_path_buf(), f))
            }
        };
        Ok(TrainingLog { records: Vec::new(), sink })
    }

    pub fn push(&mut self, rec: EpochRecord) -> Result<()> {
        if let Some((path, f)) = &mut self.sink {
            let line = serde_json::to_string(&rec)?;
            writeln!(f, "{line}").map_err(|e| Error::io(path.as_path(), e))?;
        }
        self.records.push(rec);
        Ok(())
    }

    pub fn losses(&self) -> Vec<f64> {
        self.records.iter().map(|r| r.mean_loss).collect()
    }
}
