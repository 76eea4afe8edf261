use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::losses::objective::Objective;
use crate::losses::LossWeights;
use crate::nn::{Adam, AdamConfig, RegistrationNetwork};
use crate::resample::{pad_or_resample_for_network, restore_displacement, FitMode};
use crate::volume::{ensure_same, DisplacementField, Volume3D};
use crate::warp::warp;

use super::{train_step, Clock, SystemClock};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TtoConfig {
    pub max_epochs: usize,
    pub max_seconds: f64,
    pub learning_rate: f64,
    pub weights: LossWeights,
    /// Checkpoint the optimisation starts from (used by the CLI).
    pub init_from: Option<PathBuf>,
    pub fit_mode: FitMode,
}

impl Default for TtoConfig {
    fn default() -> Self {
        TtoConfig {
            max_epochs: 100,
            max_seconds: 60.0,
            learning_rate: 1e-4,
            weights: LossWeights::default(),
            init_from: None,
            fit_mode: FitMode::Pad,
        }
    }
}

impl TtoConfig {
    pub fn validate(&self) -> Result<()> {
        if self.max_epochs == 0 || !(self.max_seconds > 0.0) {
            return Err(Error::Config("max_epochs and max_seconds must be positive".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config(format!("learning_rate must be a non-negative number, got {}", self.learning_rate)));
        }
        self.weights.validate()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    EpochBudget,
    TimeBudget,
}

#[derive(Clone, Debug)]
pub struct RegistrationResult {
    /// Sampling field in the fixed image's native geometry.
    pub ddf: DisplacementField,
    /// Moving image, in its own intensity units, warped onto the fixed
    /// image's native grid.
    pub warped: Volume3D,
    pub loss_trace: Vec<f64>,
    pub epochs_run: usize,
    pub stop_reason: StopReason,
    /// Set when a non-finite loss cut the run short; the result is then the
    /// best epoch seen.
    pub degraded: bool,
    pub seconds: f64,
}

pub fn tto_register(net: &RegistrationNetwork<f32>, fixed: &Volume3D, moving: &Volume3D, cfg: &TtoConfig) -> Result<RegistrationResult> {
    tto_register_with_clock(net, fixed, moving, cfg, &SystemClock::start())
}

/// Fine-tunes a clone of `net` on one pair and returns its field. The
/// budget is checked before each epoch, so a run overshoots `max_seconds`
/// by at most one epoch.
pub fn tto_register_with_clock(
    net: &RegistrationNetwork<f32>,
    fixed: &Volume3D,
    moving: &Volume3D,
    cfg: &TtoConfig,
    clock: &dyn Clock,
) -> Result<RegistrationResult> {
    cfg.validate()?;
    ensure_same(fixed.shape(), moving.shape())?;
    let (f_fit, rec) = pad_or_resample_for_network(&fixed.normalize_intensity(), cfg.fit_mode);
    let (m_fit, _) = pad_or_resample_for_network(&moving.normalize_intensity(), cfg.fit_mode);
    let shape = f_fit.shape();
    net.config().check_input(shape)?;
    let f = f_fit.to_f64();
    let m = m_fit.to_f64();

    let mut work = net.clone();
    let mut opt = Adam::new(work.param_count(), AdamConfig::default());
    let mut grad = vec![0.0f32; work.param_count()];
    let mut trace = Vec::new();
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut last: Option<Vec<f64>> = None;
    let mut degraded = false;
    let mut stop = StopReason::EpochBudget;
    while trace.len() < cfg.max_epochs {
        if clock.elapsed_seconds() >= cfg.max_seconds {
            stop = StopReason::TimeBudget;
            break;
        }
        let (val, u) = train_step(&mut work, &mut opt, Objective::Tto, &f, &m, shape, &cfg.weights, cfg.learning_rate, &mut grad)?;
        if !val.total.is_finite() || !work.all_finite() {
            degraded = true;
            break;
        }
        trace.push(val.total);
        if best.as_ref().is_none_or(|(b, _)| val.total < *b) {
            best = Some((val.total, u.clone()));
        }
        last = Some(u);
    }
    let seconds = clock.elapsed_seconds();
    let u = match (degraded, best, last) {
        (true, Some((_, b)), _) => b,
        (false, _, Some(l)) => l,
        _ => vec![0.0; 3 * shape.len()],
    };
    let ddf = restore_displacement(&DisplacementField::from_f64(shape, &u)?, &rec)?;
    let warped = fixed.with_data(warp(moving, &ddf)?.into_data())?;
    Ok(RegistrationResult { ddf, warped, epochs_run: trace.len(), loss_trace: trace, stop_reason: stop, degraded, seconds })
}

/// Independent test-time optimisation of every pair from the same base
/// network; a failing pair does not stop the batch.
pub fn register_batch(
    net: &RegistrationNetwork<f32>,
    pairs: &[(&Volume3D, &Volume3D)],
    cfg: &TtoConfig,
) -> Vec<Result<RegistrationResult>> {
    pairs.iter().map(|(f, m)| tto_register(net, f, m, cfg)).collect()
}
