//! Composite objectives for the three stages.
//!
//! * pretraining: `l_sim * MI(F, M∘φ) + l_smooth * R(u)`
//! * distillation: `l_dist * MI(M∘φ_T, M∘φ_S) + l_sim * MI(F, M∘φ_S) + l_smooth * R(u_S)`
//! * test-time: `l_sim * (MI + NCC)(F, M∘φ) + l_smooth * R(u) + a_div * R_div(u)`
//!
//! Every `MI` here is the multi-axis loss, i.e. already negated.

use serde::Serialize;

use crate::error::Result;
use crate::volume::{ensure_same, DisplacementField, Shape3, Volume3D};
use crate::warp::{warp_backward, warp_f64};

use super::mi::multi_axis_mi_backward;
use super::ncc::ncc_backward;
use super::regularize::{divergence_penalty_backward, smoothness_backward};
use super::LossWeights;

#[derive(Clone, Copy, Debug)]
pub enum Objective<'a> {
    Pretrain,
    /// `teacher_warped` is the moving image warped by the (frozen) teacher
    /// field; it is treated as a constant.
    Distill { teacher_warped: &'a [f64] },
    Tto,
}

impl Objective<'_> {
    pub fn name(&self) -> &'static str {
        match self {
            Objective::Pretrain => "pretrain",
            Objective::Distill { .. } => "distill",
            Objective::Tto => "tto",
        }
    }
}

/// Unweighted term values and the weighted total.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct ObjectiveValue {
    pub total: f64,
    pub mi: f64,
    pub ncc: f64,
    pub distill: f64,
    pub smooth: f64,
    pub div: f64,
}

/// Evaluates `obj` at displacement `u` (planar, voxel units). When `grad_u`
/// is given, `d total / d u` is accumulated into it.
pub fn evaluate(
    obj: Objective<'_>,
    fixed: &[f64],
    moving: &[f64],
    shape: Shape3,
    u: &[f64],
    w: &LossWeights,
    mut grad_u: Option<&mut [f64]>,
) -> Result<ObjectiveValue> {
    let sb = w.binning();
    let n = shape.len();
    let warped = warp_f64(moving, shape, u);
    let want_grad = grad_u.is_some();
    let mut g_warped = if want_grad { vec![0.0; n] } else { Vec::new() };
    let mut val = ObjectiveValue {
        mi: multi_axis_mi_backward(fixed, &warped, shape, sb, w.lambda_sim, None, on(&mut g_warped, want_grad && w.lambda_sim > 0.0)),
        ..Default::default()
    };
    val.total = w.lambda_sim * val.mi;
    match obj {
        Objective::Pretrain => {}
        Objective::Distill { teacher_warped } => {
            val.distill =
                multi_axis_mi_backward(teacher_warped, &warped, shape, sb, w.lambda_dist, None, on(&mut g_warped, want_grad && w.lambda_dist > 0.0));
            val.total += w.lambda_dist * val.distill;
        }
        Objective::Tto => {
            val.ncc = ncc_backward(fixed, &warped, w.lambda_sim, None, on(&mut g_warped, want_grad && w.lambda_sim > 0.0));
            val.total += w.lambda_sim * val.ncc;
        }
    }
    let smooth_grad = grad_u.as_deref_mut().filter(|_| w.lambda_smooth > 0.0);
    val.smooth = smoothness_backward(u, shape, w.lambda_smooth, smooth_grad);
    val.total += w.lambda_smooth * val.smooth;
    if let Objective::Tto = obj {
        let div_grad = grad_u.as_deref_mut().filter(|_| w.alpha_div > 0.0);
        val.div = divergence_penalty_backward(u, shape, w.alpha_div, div_grad)?;
        val.total += w.alpha_div * val.div;
    }
    if let Some(g) = grad_u {
        warp_backward(moving, shape, u, &g_warped, None, Some(g));
    }
    Ok(val)
}

fn on(buf: &mut [f64], active: bool) -> Option<&mut [f64]> {
    active.then_some(buf)
}

fn inputs(fixed: &Volume3D, moving: &Volume3D, u: &DisplacementField) -> Result<(Vec<f64>, Vec<f64>, Vec<f64>)> {
    ensure_same(fixed.shape(), moving.shape())?;
    ensure_same(fixed.shape(), u.shape())?;
    Ok((fixed.to_f64(), moving.to_f64(), u.to_f64()))
}

pub fn pretrain_loss(fixed: &Volume3D, moving: &Volume3D, u: &DisplacementField, w: &LossWeights) -> Result<f64> {
    let (f, m, uu) = inputs(fixed, moving, u)?;
    Ok(evaluate(Objective::Pretrain, &f, &m, fixed.shape(), &uu, w, None)?.total)
}

pub fn kd_loss(
    fixed: &Volume3D,
    moving: &Volume3D,
    u_teacher: &DisplacementField,
    u_student: &DisplacementField,
    w: &LossWeights,
) -> Result<f64> {
    let (f, m, us) = inputs(fixed, moving, u_student)?;
    ensure_same(fixed.shape(), u_teacher.shape())?;
    let tw = warp_f64(&m, fixed.shape(), &u_teacher.to_f64());
    Ok(evaluate(Objective::Distill { teacher_warped: &tw }, &f, &m, fixed.shape(), &us, w, None)?.total)
}

pub fn tto_loss(fixed: &Volume3D, moving: &Volume3D, u: &DisplacementField, w: &LossWeights) -> Result<f64> {
    let (f, m, uu) = inputs(fixed, moving, u)?;
    Ok(evaluate(Objective::Tto, &f, &m, fixed.shape(), &uu, w, None)?.total)
}
