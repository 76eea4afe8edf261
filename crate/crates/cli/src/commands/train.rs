use std::path::{Path, PathBuf};

use mareg_core::nn::{load_checkpoint, NetworkConfig, NetworkMode, RegistrationNetwork};
use mareg_core::train::{distill_student, pretrain_teacher, Trained, TrainConfig};
use serde::Serialize;

use crate::config::RunConfig;
use crate::error::{io_err, CliError, CliResult};

#[derive(Clone, Debug, Serialize)]
pub struct TrainSummary {
    pub stage: String,
    pub checkpoint: PathBuf,
    pub checksum: String,
    pub parameters: usize,
    pub epochs: usize,
    pub final_loss: Option<f64>,
    pub log: PathBuf,
}

/// Points checkpoints and the log at `out`. A finished stage is not
/// overwritten unless `force` is set, in which case its old log goes too.
fn prepare(mut tc: TrainConfig, out: &Path, stage: &str, force: bool) -> CliResult<TrainConfig> {
    let final_ckpt = out.join(format!("{stage}_final.ckpt"));
    let log = out.join(format!("{stage}_log.jsonl"));
    if final_ckpt.exists() && !force {
        return Err(CliError::user(format!("{} exists; pass --force to retrain", final_ckpt.display())));
    }
    if log.exists() {
        std::fs::remove_file(&log).map_err(|e| io_err(&log, e))?;
    }
    tc.checkpoint_dir = Some(out.to_path_buf());
    tc.log_path = Some(log);
    Ok(tc)
}

fn summary(stage: &str, out: &Path, t: &Trained) -> TrainSummary {
    TrainSummary {
        stage: stage.into(),
        checkpoint: out.join(format!("{stage}_final.ckpt")),
        checksum: t.network.checksum(),
        parameters: t.network.param_count(),
        epochs: t.log.len(),
        final_loss: t.log.last().map(|r| r.mean_loss),
        log: out.join(format!("{stage}_log.jsonl")),
    }
}

pub fn train_teacher(cfg: &RunConfig, out: &Path, force: bool) -> CliResult<TrainSummary> {
    let tc = prepare(cfg.teacher_config(), out, "teacher", force)?;
    let trained = pretrain_teacher(&tc, &cfg.generator)?;
    Ok(summary("teacher", out, &trained))
}

pub fn distill(cfg: &RunConfig, teacher: &Path, out: &Path, force: bool) -> CliResult<TrainSummary> {
    if !teacher.is_file() {
        return Err(CliError::user(format!("teacher checkpoint not found: {}", teacher.display())));
    }
    let teacher = load_checkpoint(teacher, None)?;
    let tc = prepare(cfg.distill_config(), out, "student", force)?;
    let student = RegistrationNetwork::build(NetworkConfig::student(), NetworkMode::Student, cfg.seed)?;
    let trained = distill_student(&teacher, student, &tc, &cfg.generator)?;
    Ok(summary("student", out, &trained))
}
