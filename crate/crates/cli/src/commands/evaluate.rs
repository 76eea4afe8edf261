use std::path::{Path, PathBuf};

use mareg_core::eval::{evaluate_pair, overlay_checkerboard, overlay_falsecolor, write_png_stack, EvalInputs, EvalReport};
use mareg_core::Mask3D;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

use super::{file_name, read_volume, transactional};

pub struct EvaluateArgs {
    pub fixed: PathBuf,
    /// The moving image, registered or not.
    pub moving: PathBuf,
    pub fixed_mask: Option<PathBuf>,
    pub moving_mask: Option<PathBuf>,
    /// Restricts the PMM average to this mask.
    pub domain: Option<PathBuf>,
    pub overlays: bool,
    pub out: PathBuf,
}

fn read_mask(path: &Path, threshold: f32) -> CliResult<Mask3D> {
    Ok(Mask3D::from_volume(&read_volume(path)?, threshold))
}

/// Writes `report.json`, the PMM map volume and, if asked, PNG overlays.
pub fn evaluate(cfg: &RunConfig, args: &EvaluateArgs) -> CliResult<EvalReport> {
    let fixed = read_volume(&args.fixed)?;
    let moving = read_volume(&args.moving)?;
    if fixed.shape() != moving.shape() {
        return Err(CliError::user(format!(
            "fixed {} and moving {} grids differ",
            fixed.shape(),
            moving.shape()
        )));
    }
    let t = cfg.eval.mask_threshold;
    let masks = match (&args.fixed_mask, &args.moving_mask) {
        (Some(a), Some(b)) => Some((read_mask(a, t)?, read_mask(b, t)?)),
        (None, None) => None,
        _ => return Err(CliError::user("--fixed-mask and --moving-mask go together")),
    };
    let domain = args.domain.as_deref().map(|p| read_mask(p, t)).transpose()?;
    let inputs = EvalInputs {
        fixed_id: args.fixed.display().to_string(),
        moving_id: args.moving.display().to_string(),
        domain: domain.as_ref(),
        masks: masks.as_ref().map(|(a, b)| (a, b)),
    };
    let (report, map) = evaluate_pair(&fixed, &moving, &inputs, &cfg.eval.pmm)?;
    let fmt = cfg.format;
    let out = args.out.as_path();
    transactional(|outputs| {
        outputs.dir(out)?;
        outputs.volume(&fixed.with_data(map.to_volume().into_data())?, out.join(file_name(fmt, "pmm")), fmt)?;
        if args.overlays || cfg.eval.overlays {
            let dir = out.join("overlays");
            outputs.dir(&dir)?;
            for prefix in ["falsecolor", "checkerboard"] {
                outputs.expect((0..fixed.shape().nz).map(|z| dir.join(format!("{prefix}_{z:04}.png"))));
                outputs.expect([dir.join(format!("{prefix}_index.json"))]);
            }
            write_png_stack(&dir, "falsecolor", &overlay_falsecolor(&fixed, &moving)?)?;
            write_png_stack(&dir, "checkerboard", &overlay_checkerboard(&fixed, &moving, cfg.eval.checkerboard_tile)?)?;
        }
        outputs.json(&report, out.join("report.json"))?;
        Ok(report)
    })
}
