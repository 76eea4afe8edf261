//! Stage drivers: teacher pretraining, distillation and test-time
//! optimisation.

mod clock;
mod log;
mod stages;
mod tto;

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::objective::{evaluate, Objective, ObjectiveValue};
use crate::losses::LossWeights;
use crate::nn::{Adam, Features, RegistrationNetwork};
use crate::volume::Shape3;

pub use clock::{Clock, ManualClock, SystemClock};
pub use log::{EpochRecord, TrainingLog};
pub use stages::{distill_student, pretrain_teacher, pretrain_teacher_from, Trained};
pub use tto::{register_batch, tto_register, tto_register_with_clock, RegistrationResult, StopReason, TtoConfig};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub pairs_per_epoch: usize,
    pub learning_rate: f64,
    pub weights: LossWeights,
    pub seed: u64,
    /// Persist a checkpoint every this many epochs (0 disables).
    pub checkpoint_every: usize,
    /// Spatial shape of the generated training pairs.
    pub shape: Shape3,
    pub checkpoint_dir: Option<PathBuf>,
    /// JSON-lines log destination; records are also kept in memory.
    pub log_path: Option<PathBuf>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            pairs_per_epoch: 500,
            learning_rate: 1e-4,
            weights: LossWeights::default(),
            seed: 0,
            checkpoint_every: 10,
            shape: Shape3::cube(64),
            checkpoint_dir: None,
            log_path: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.pairs_per_epoch == 0 {
            return Err(Error::Config("epochs and pairs_per_epoch must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be a non-negative number, got {}", self.learning_rate)));
        }
        self.weights.validate()
    }
}

/// Loss and gradient for one forward/backward pass at `shape`. Returns the
/// objective value and the network output as a planar `f64` field.
pub(crate) fn loss_and_grad(
    net: &RegistrationNetwork<f32>,
    obj: Objective<'_>,
    fixed: &[f64],
    moving: &[f64],
    shape: Shape3,
    weights: &LossWeights,
    grad: &mut [f32],
) -> Result<(ObjectiveValue, Vec<f64>)> {
    let input = net.input_from_slices(shape, fixed, moving)?;
    let (out, cache) = net.forward_cached(input);
    let u: Vec<f64> = out.data.iter().map(|&v| v as f64).collect();
    let mut gu = vec![0.0; u.len()];
    let val = evaluate(obj, fixed, moving, shape, &u, weights, Some(&mut gu))?;
    if val.total.is_finite() {
        let g = Features { channels: 3, shape, data: gu.into_iter().map(|v| v as f32).collect() };
        grad.fill(0.0);
        net.backward(&cache, &g, grad);
    }
    Ok((val, u))
}

/// One optimisation step; returns the pre-step objective.
pub(crate) fn train_step(
    net: &mut RegistrationNetwork<f32>,
    opt: &mut Adam,
    obj: Objective<'_>,
    fixed: &[f64],
    moving: &[f64],
    shape: Shape3,
    weights: &LossWeights,
    lr: f64,
    grad: &mut [f32],
) -> Result<(ObjectiveValue, Vec<f64>)> {
    let (val, u) = loss_and_grad(net, obj, fixed, moving, shape, weights, grad)?;
    if val.total.is_finite() && grad.iter().all(|g| g.is_finite()) {
        opt.step(net.params_mut(), grad, lr);
    }
    Ok((val, u))
}
