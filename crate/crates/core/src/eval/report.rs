//! Serialisable evaluation summary.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::volume::{Mask3D, Volume3D};

use super::overlap::{dice, iou};
use super::pmm::{mean_pmm, patchwise_mi_map, slice_means, MiMap, PmmConfig};

/// JSON schema (draft 2020-12) every serialised [`EvalReport`] satisfies.
pub const REPORT_SCHEMA: &str = r#"{
  "$schema": "https://json-schema.org/draft/2020-12/schema",
  "title": "EvalReport",
  "type": "object",
  "required": ["mean_pmm", "slice_means", "dice", "iou", "provenance"],
  "additionalProperties": false,
  "properties": {
    "mean_pmm": {"type": "number"},
    "slice_means": {"type": "array", "items": {"type": ["number", "null"]}},
    "dice": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
    "iou": {"type": ["number", "null"], "minimum": 0, "maximum": 1},
    "provenance": {
      "type": "object",
      "required": ["fixed", "moving", "pmm", "normalized", "defined_voxels", "patches"],
      "additionalProperties": false,
      "properties": {
        "fixed": {"type": "string"},
        "moving": {"type": "string"},
        "pmm": {
          "type": "object",
          "required": ["patch", "stride", "bins", "min_fraction", "measure"],
          "additionalProperties": false,
          "properties": {
            "patch": {"type": "integer", "minimum": 1},
            "stride": {"type": "integer", "minimum": 1},
            "bins": {"type": "integer", "minimum": 2},
            "min_fraction": {"type": "number", "minimum": 0, "maximum": 1},
            "measure": {"type": "string", "enum": ["mi", "nmi"]}
          }
        },
        "normalized": {"type": "boolean"},
        "defined_voxels": {"type": "integer", "minimum": 1},
        "patches": {"type": "integer", "minimum": 1}
      }
    }
  }
}"#;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub fixed: String,
    pub moving: String,
    pub pmm: PmmConfig,
    /// Whether both inputs were min-max normalised before binning.
    pub normalized: bool,
    pub defined_voxels: usize,
    pub patches: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub mean_pmm: f64,
    /// Mean map value per z slice; `None` where no voxel is defined.
    pub slice_means: Vec<Option<f64>>,
    pub dice: Option<f64>,
    pub iou: Option<f64>,
    pub provenance: Provenance,
}

/// Inputs to [`evaluate_pair`] beyond the two images.
#[derive(Clone, Debug, Default)]
pub struct EvalInputs<'a> {
    pub fixed_id: String,
    pub moving_id: String,
    pub domain: Option<&'a Mask3D>,
    /// Fixed and registered segmentation masks, when available.
    pub masks: Option<(&'a Mask3D, &'a Mask3D)>,
}

/// Normalises both volumes, builds the PMM map and the report.
pub fn evaluate_pair(fixed: &Volume3D, moving: &Volume3D, inputs: &EvalInputs<'_>, cfg: &PmmConfig) -> Result<(EvalReport, MiMap)> {
    let map = patchwise_mi_map(&fixed.normalize_intensity(), &moving.normalize_intensity(), inputs.domain, cfg)?;
    let mean = mean_pmm(&map, inputs.domain)?;
    let (dice, iou) = match inputs.masks {
        Some((a, b)) => (Some(dice(a, b)?), Some(iou(a, b)?)),
        None => (None, None),
    };
    let defined_voxels = map
        .mask
        .values()
        .iter()
        .enumerate()
        .filter(|&(i, &m)| m && inputs.domain.is_none_or(|d| d.values()[i]))
        .count();
    let report = EvalReport {
        mean_pmm: mean,
        slice_means: slice_means(&map),
        dice,
        iou,
        provenance: Provenance {
            fixed: inputs.fixed_id.clone(),
            moving: inputs.moving_id.clone(),
            pmm: *cfg,
            normalized: true,
            defined_voxels,
            patches: map.patches,
        },
    };
    if !report.mean_pmm.is_finite() {
        return Err(Error::NonFinite { stage: "evaluate", step: 0 });
    }
    Ok((report, map))
}
