//! Similarity and regularisation terms, all oriented so that lower is
//! better, and the three training objectives built from them.

pub mod mi;
pub mod ncc;
pub mod objective;
pub mod regularize;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use mi::{multi_axis_mi, soft_mi_2d, SoftBinning};
pub use ncc::ncc_loss;
pub use objective::{kd_loss, pretrain_loss, tto_loss, Objective, ObjectiveValue};
pub use regularize::{divergence_penalty, smoothness};

pub const DEFAULT_BINS: usize = 32;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossWeights {
    pub lambda_sim: f64,
    pub lambda_smooth: f64,
    pub lambda_dist: f64,
    pub alpha_div: f64,
    pub bins: usize,
    /// Parzen kernel width in normalised-intensity units; the default is
    /// half a bin width.
    pub parzen_sigma: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            lambda_sim: 1.0,
            lambda_smooth: 0.1,
            lambda_dist: 1.0,
            alpha_div: 0.1,
            bins: DEFAULT_BINS,
            parzen_sigma: 0.5 / (DEFAULT_BINS - 1) as f64,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let weights = [
            ("lambda_sim", self.lambda_sim),
            ("lambda_smooth", self.lambda_smooth),
            ("lambda_dist", self.lambda_dist),
            ("alpha_div", self.alpha_div),
        ];
        for (name, w) in weights {
            if !(w >= 0.0 && w.is_finite()) {
                return Err(Error::Config(format!("{name} must be a non-negative number, got {w}")));
            }
        }
        SoftBinning::new(self.bins, self.parzen_sigma).map(|_| ())
    }

    pub fn binning(&self) -> SoftBinning {
        SoftBinning::from(self)
    }
}
