use std::path::{Path, PathBuf};

use mareg_core::affine::{affine_prealign_with, AffineParams};
use mareg_core::io::save_displacement;
use mareg_core::nn::load_checkpoint;
use mareg_core::train::{tto_register, StopReason};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{CliError, CliResult};

use super::{file_name, read_volume, relative, transactional, volumes_in};

pub struct RegisterArgs {
    pub fixed: PathBuf,
    /// Moving volumes, or a single directory whose volumes are the frames.
    pub moving: Vec<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub affine: bool,
    pub out: PathBuf,
}

#[derive(Clone, Debug, Serialize)]
pub struct AffineSummary {
    pub params: AffineParams,
    pub ncc_before: f64,
    pub ncc_after: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct FrameSummary {
    pub frame: usize,
    pub moving: PathBuf,
    pub warped: String,
    /// Sampling field on the fixed grid; with `affine` set it applies to
    /// the affinely prealigned moving image.
    pub ddf: Vec<String>,
    pub affine: Option<AffineSummary>,
    pub loss_trace: Vec<f64>,
    pub epochs_run: usize,
    pub stop_reason: StopReason,
    pub degraded: bool,
    pub seconds: f64,
}

#[derive(Clone, Debug, Serialize)]
struct RunSummary<'a> {
    fixed: &'a Path,
    checkpoint: &'a Path,
    checkpoint_checksum: String,
    config: &'a RunConfig,
    frames: &'a [FrameSummary],
}

fn moving_frames(inputs: &[PathBuf]) -> CliResult<Vec<PathBuf>> {
    match inputs {
        [] => Err(CliError::user("no moving input given")),
        [dir] if dir.is_dir() => volumes_in(dir),
        files => Ok(files.to_vec()),
    }
}

/// Registers every moving frame to `fixed`, writing `frame_NNN/` outputs and
/// `register.json`. On any failure all outputs written so far are removed.
pub fn register(cfg: &RunConfig, args: &RegisterArgs) -> CliResult<Vec<FrameSummary>> {
    let ckpt = args
        .checkpoint
        .clone()
        .or_else(|| cfg.tto.init_from.clone())
        .ok_or_else(|| CliError::user("no checkpoint given (use --checkpoint or tto.init_from)"))?;
    if !ckpt.is_file() {
        return Err(CliError::user(format!("checkpoint not found: {}", ckpt.display())));
    }
    let net = load_checkpoint(&ckpt, None)?;
    let fixed = read_volume(&args.fixed)?;
    let frames = moving_frames(&args.moving)?;
    let fmt = cfg.format;
    let out = args.out.as_path();
    transactional(|outputs| {
        outputs.dir(out)?;
        let mut summaries = Vec::with_capacity(frames.len());
        for (k, path) in frames.iter().enumerate() {
            let mut moving = read_volume(path)?;
            let mut affine = None;
            if args.affine || cfg.prealign.enabled {
                if moving.shape() != fixed.shape() {
                    return Err(CliError::user(format!(
                        "affine prealignment needs matching grids: {} vs {}",
                        path.display(),
                        args.fixed.display()
                    )));
                }
                let a = affine_prealign_with(&fixed, &moving, &cfg.prealign.affine)?;
                affine = Some(AffineSummary { params: a.params, ncc_before: a.ncc_before, ncc_after: a.ncc_after });
                moving = fixed.with_data(a.warped.into_data())?;
            }
            let r = tto_register(&net, &fixed, &moving, &cfg.tto)?;
            let dir = out.join(format!("frame_{k:03}"));
            outputs.dir(&dir)?;
            let warped = outputs.volume(&r.warped, dir.join(file_name(fmt, "warped")), fmt)?;
            let ddf_paths: Vec<_> = ["ux", "uy", "uz"].iter().map(|a| dir.join(file_name(fmt, &format!("ddf_{a}")))).collect();
            outputs.expect(ddf_paths.iter().cloned());
            if fmt == mareg_core::io::VolumeFormat::RawJson {
                outputs.expect(ddf_paths.iter().map(|p| mareg_core::io::raw_data_path(p)));
            }
            let ddf = save_displacement(&r.ddf, &fixed, &dir, "ddf", fmt)?;
            let summary = FrameSummary {
                frame: k,
                moving: path.clone(),
                warped: relative(&warped, out),
                ddf: ddf.iter().map(|p| relative(p, out)).collect(),
                affine,
                loss_trace: r.loss_trace,
                epochs_run: r.epochs_run,
                stop_reason: r.stop_reason,
                degraded: r.degraded,
                seconds: r.seconds,
            };
            outputs.json(&summary, dir.join("result.json"))?;
            summaries.push(summary);
        }
        let run = RunSummary {
            fixed: &args.fixed,
            checkpoint: &ckpt,
            checkpoint_checksum: net.checksum(),
            config: cfg,
            frames: &summaries,
        };
        outputs.json(&run, out.join("register.json"))?;
        Ok(summaries)
    })
}
