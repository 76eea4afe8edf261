use std::path::Path;

use mareg_core::io::save_displacement;
use mareg_core::synth::{generate_pair, sub_seed, GeneratorConfig};
use mareg_core::Shape3;
use serde::{Deserialize, Serialize};

use crate::config::{dataset_hash, RunConfig};
use crate::error::{io_err, CliError, CliResult};

use super::{file_name, relative, transactional};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairEntry {
    pub index: usize,
    pub seed: u64,
    pub fixed: String,
    pub moving: String,
    pub gt_ddf: Vec<String>,
    pub fixed_labels: String,
    pub moving_labels: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config_hash: String,
    pub seed: u64,
    pub shape: Shape3,
    pub format: mareg_core::io::VolumeFormat,
    pub generator: GeneratorConfig,
    pub pairs: Vec<PairEntry>,
}

pub const MANIFEST: &str = "manifest.json";

/// Writes `count` pairs under `out/pair_NNNN/` plus `out/manifest.json`.
/// An existing manifest with a different dataset hash is never mixed with.
pub fn synthesize(cfg: &RunConfig, out: &Path) -> CliResult<Manifest> {
    let hash = dataset_hash(cfg);
    let manifest_path = out.join(MANIFEST);
    if manifest_path.exists() {
        let text = std::fs::read_to_string(&manifest_path).map_err(|e| io_err(&manifest_path, e))?;
        let old: serde_json::Value = serde_json::from_str(&text)
            .map_err(|e| CliError::user(format!("{} is not a manifest: {e}", manifest_path.display())))?;
        if old.get("config_hash").and_then(|h| h.as_str()) != Some(hash.as_str()) {
            return Err(CliError::user(format!(
                "{} was written with a different configuration; refusing to mix datasets",
                out.display()
            )));
        }
    }
    let shape = cfg.synthesize.shape;
    let fmt = cfg.format;
    transactional(|outputs| {
        outputs.dir(out)?;
        let mut pairs = Vec::with_capacity(cfg.synthesize.count);
        for index in 0..cfg.synthesize.count {
            let seed = sub_seed(cfg.seed, index as u64);
            let p = generate_pair(seed, shape, &cfg.generator)?;
            let dir = out.join(format!("pair_{index:04}"));
            outputs.dir(&dir)?;
            let fixed = outputs.volume(&p.fixed, dir.join(file_name(fmt, "fixed")), fmt)?;
            let moving = outputs.volume(&p.moving, dir.join(file_name(fmt, "moving")), fmt)?;
            let fl = outputs.volume(&p.fixed_labels.to_volume(), dir.join(file_name(fmt, "fixed_labels")), fmt)?;
            let ml = outputs.volume(&p.moving_labels.to_volume(), dir.join(file_name(fmt, "moving_labels")), fmt)?;
            let ddf_paths: Vec<_> = ["ux", "uy", "uz"].iter().map(|a| dir.join(file_name(fmt, &format!("gt_ddf_{a}")))).collect();
            outputs.expect(ddf_paths.iter().cloned());
            if fmt == mareg_core::io::VolumeFormat::RawJson {
                outputs.expect(ddf_paths.iter().map(|p| mareg_core::io::raw_data_path(p)));
            }
            let ddf = save_displacement(&p.gt_ddf, &p.fixed, &dir, "gt_ddf", fmt)?;
            pairs.push(PairEntry {
                index,
                seed,
                fixed: relative(&fixed, out),
                moving: relative(&moving, out),
                gt_ddf: ddf.iter().map(|d| relative(d, out)).collect(),
                fixed_labels: relative(&fl, out),
                moving_labels: relative(&ml, out),
            });
        }
        let manifest = Manifest { config_hash: hash.clone(), seed: cfg.seed, shape, format: fmt, generator: cfg.generator.clone(), pairs };
        outputs.json(&manifest, manifest_path.clone())?;
        Ok(manifest)
    })
}
