//! The run configuration: one JSON document, every field defaulted, unknown
//! keys rejected, with `--dotted.key value` overrides applied on top.

use std::path::Path;

use mareg_core::affine::AffineConfig;
use mareg_core::eval::PmmConfig;
use mareg_core::io::VolumeFormat;
use mareg_core::synth::GeneratorConfig;
use mareg_core::train::{TrainConfig, TtoConfig};
use mareg_core::Shape3;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::{CliError, CliResult};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSettings {
    /// Number of pairs to write.
    pub count: usize,
    pub shape: Shape3,
}

impl Default for SynthSettings {
    fn default() -> Self {
        SynthSettings { count: 10, shape: Shape3::cube(64) }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PrealignSettings {
    pub enabled: bool,
    pub affine: AffineConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalSettings {
    pub pmm: PmmConfig,
    pub overlays: bool,
    pub checkerboard_tile: usize,
    /// Intensity above which a mask volume voxel counts as inside.
    pub mask_threshold: f32,
}

impl Default for EvalSettings {
    fn default() -> Self {
        EvalSettings { pmm: PmmConfig::default(), overlays: false, checkerboard_tile: 8, mask_threshold: 0.5 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Drives every random choice of every stage.
    pub seed: u64,
    /// Output volume format.
    pub format: VolumeFormat,
    pub generator: GeneratorConfig,
    pub synthesize: SynthSettings,
    pub teacher: TrainConfig,
    pub distill: TrainConfig,
    pub tto: TtoConfig,
    pub prealign: PrealignSettings,
    pub eval: EvalSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            format: VolumeFormat::Nifti,
            generator: GeneratorConfig::default(),
            synthesize: SynthSettings::default(),
            teacher: TrainConfig::default(),
            distill: TrainConfig { epochs: 500, ..TrainConfig::default() },
            tto: TtoConfig::default(),
            prealign: PrealignSettings::default(),
            eval: EvalSettings::default(),
        }
    }
}

impl RunConfig {
    /// Stage configs carry their own `seed`; the run seed must be the only
    /// source, so a stage seed may only repeat it.
    pub fn validate(&self) -> CliResult<()> {
        for (name, stage) in [("teacher", &self.teacher), ("distill", &self.distill)] {
            if stage.seed != 0 && stage.seed != self.seed {
                return Err(CliError::user(format!("{name}.seed conflicts with the run seed; set the top-level seed instead")));
            }
            stage.validate()?;
        }
        self.tto.validate()?;
        Ok(())
    }

    pub fn teacher_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.teacher.clone() }
    }

    pub fn distill_config(&self) -> TrainConfig {
        TrainConfig { seed: self.seed, ..self.distill.clone() }
    }
}

const ALIASES: &[(&str, &str)] = &[("max_seconds", "tto.max_seconds"), ("max_epochs", "tto.max_epochs")];

/// Turns `--a.b-c value` pairs into `(["a", "b_c"], value)`. Values parse as
/// JSON when possible and as plain strings otherwise.
pub fn parse_overrides(args: &[String]) -> CliResult<Vec<(Vec<String>, Value)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(flag) = it.next() {
        let key = flag
            .strip_prefix("--")
            .filter(|k| !k.is_empty())
            .ok_or_else(|| CliError::user(format!("unexpected argument {flag:?}; overrides look like --key value")))?;
        let raw = it.next().ok_or_else(|| CliError::user(format!("override --{key} is missing a value")))?;
        let key = key.replace('-', "_");
        let key = ALIASES.iter().find(|(a, _)| *a == key).map_or(key.clone(), |(_, full)| full.to_string());
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.clone()));
        out.push((key.split('.').map(str::to_owned).collect(), value));
    }
    Ok(out)
}

fn apply(doc: &mut Value, path: &[String], value: Value) -> CliResult<()> {
    let mut cur = doc;
    for (k, seg) in path.iter().enumerate() {
        let obj = cur
            .as_object_mut()
            .ok_or_else(|| CliError::user(format!("override {} walks into a non-object", path.join("."))))?;
        if k + 1 == path.len() {
            obj.insert(seg.clone(), value);
            return Ok(());
        }
        cur = obj.entry(seg.clone()).or_insert_with(|| Value::Object(Default::default()));
    }
    Ok(())
}

/// Reads the config file (or starts from defaults), applies overrides and
/// validates the result.
pub fn load_config(path: Option<&Path>, overrides: &[String]) -> CliResult<RunConfig> {
    let mut doc = match path {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| crate::error::io_err(p, e))?;
            serde_json::from_str(&text).map_err(|e| CliError::user(format!("{}: {e}", p.display())))?
        }
        None => Value::Object(Default::default()),
    };
    for (key, value) in parse_overrides(overrides)? {
        apply(&mut doc, &key, value)?;
    }
    let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| CliError::user(format!("invalid config: {e}")))?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Hash of everything that determines synthesized data.
pub fn dataset_hash(cfg: &RunConfig) -> String {
    let key = serde_json::json!({
        "seed": cfg.seed,
        "format": cfg.format,
        "generator": cfg.generator,
        "shape": cfg.synthesize.shape,
    });
    sha256_hex(key.to_string().as_bytes())
}
