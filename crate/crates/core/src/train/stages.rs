use std::path::Path;
use std::time::Instant;

use crate::error::{Error, Result};
use crate::losses::objective::Objective;
use crate::nn::{save_checkpoint, Adam, AdamConfig, NetworkConfig, NetworkMode, RegistrationNetwork};
use crate::synth::{generate_pair, sub_seed, GeneratorConfig};
use crate::warp::warp_f64;

use super::{train_step, EpochRecord, TrainConfig, TrainingLog};

/// A trained network with its per-epoch log.
#[derive(Clone, Debug)]
pub struct Trained {
    pub network: RegistrationNetwork<f32>,
    pub log: Vec<EpochRecord>,
}

impl Trained {
    pub fn losses(&self) -> Vec<f64> {
        self.log.iter().map(|r| r.mean_loss).collect()
    }
}

const TEACHER_STREAM: u64 = 0x7EAC;
const STUDENT_STREAM: u64 = 0x57D7;

fn pair_seed(seed: u64, stream: u64, epoch: usize, ppe: usize, k: usize) -> u64 {
    sub_seed(seed ^ stream, (epoch * ppe + k) as u64)
}

fn persist(net: &RegistrationNetwork<f32>, dir: Option<&Path>, name: &str) -> Result<()> {
    match dir {
        Some(d) => save_checkpoint(net, &d.join(name)),
        None => Ok(()),
    }
}

/// Trains a freshly initialised teacher on generated pairs.
pub fn pretrain_teacher(cfg: &TrainConfig, gen: &GeneratorConfig) -> Result<Trained> {
    let net = RegistrationNetwork::build(NetworkConfig::teacher(), NetworkMode::Teacher, cfg.seed)?;
    pretrain_teacher_from(net, cfg, gen)
}

/// As [`pretrain_teacher`] starting from a given network (any config).
pub fn pretrain_teacher_from(net: RegistrationNetwork<f32>, cfg: &TrainConfig, gen: &GeneratorConfig) -> Result<Trained> {
    run(net, None, cfg, gen, "teacher", TEACHER_STREAM)
}

/// Distils `teacher` (left untouched) into `student`.
pub fn distill_student(
    teacher: &RegistrationNetwork<f32>,
    student: RegistrationNetwork<f32>,
    cfg: &TrainConfig,
    gen: &GeneratorConfig,
) -> Result<Trained> {
    run(student, Some(teacher), cfg, gen, "student", STUDENT_STREAM)
}

fn run(
    mut net: RegistrationNetwork<f32>,
    teacher: Option<&RegistrationNetwork<f32>>,
    cfg: &TrainConfig,
    gen: &GeneratorConfig,
    stage: &'static str,
    stream: u64,
) -> Result<Trained> {
    cfg.validate()?;
    net.config().check_input(cfg.shape)?;
    let dir = cfg.checkpoint_dir.as_deref();
    let mut log = TrainingLog::new(cfg.log_path.as_deref())?;
    let mut opt = Adam::new(net.param_count(), AdamConfig::default());
    let mut grad = vec![0.0f32; net.param_count()];
    let start = Instant::now();
    let shape = cfg.shape;
    for epoch in 0..cfg.epochs {
        let mut total = 0.0;
        for k in 0..cfg.pairs_per_epoch {
            let pair = generate_pair(pair_seed(cfg.seed, stream, epoch, cfg.pairs_per_epoch, k), shape, gen)?;
            let f = pair.fixed.to_f64();
            let m = pair.moving.to_f64();
            let teacher_warped;
            let obj = match teacher {
                None => Objective::Pretrain,
                Some(t) => {
                    let u_t = t.forward(&pair.fixed, &pair.moving)?;
                    teacher_warped = warp_f64(&m, shape, &u_t.to_f64());
                    Objective::Distill { teacher_warped: &teacher_warped }
                }
            };
            let before = net.params().to_vec();
            let (val, _) = train_step(&mut net, &mut opt, obj, &f, &m, shape, &cfg.weights, cfg.learning_rate, &mut grad)?;
            if !val.total.is_finite() || !net.all_finite() {
                net.params_mut().copy_from_slice(&before);
                persist(&net, dir, &format!("{stage}_last_good.ckpt"))?;
                return Err(Error::NonFinite { stage, step: epoch * cfg.pairs_per_epoch + k });
            }
            total += val.total;
        }
        log.push(EpochRecord {
            epoch,
            mean_loss: total / cfg.pairs_per_epoch as f64,
            wall_seconds: start.elapsed().as_secs_f64(),
        })?;
        if cfg.checkpoint_every > 0 && (epoch + 1) % cfg.checkpoint_every == 0 {
            persist(&net, dir, &format!("{stage}_epoch{:04}.ckpt", epoch + 1))?;
        }
    }
    persist(&net, dir, &format!("{stage}_final.ckpt"))?;
    Ok(Trained { network: net, log: log.records })
}
