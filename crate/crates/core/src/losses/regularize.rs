//! Deformation regularisers: squared-gradient smoothness and squared
//! divergence, both averaged over voxels.

use crate::diff::{divergence_f64, forward_diff, forward_diff_adjoint};
use crate::error::Result;
use crate::volume::{DisplacementField, Shape3};

/// `(1/N) * sum_c sum_a |D_a u_c|^2`, accumulating `scale * grad` if asked.
pub fn smoothness_backward(u: &[f64], shape: Shape3, scale: f64, grad: Option<&mut [f64]>) -> f64 {
    let n = shape.len();
    let mut total = 0.0;
    let mut grad = grad;
    for c in 0..3 {
        let comp = &u[c * n..(c + 1) * n];
        for a in 0..3 {
            let d = forward_diff(comp, shape, a);
            total += d.iter().map(|v| v * v).sum::<f64>();
            if let Some(g) = grad.as_deref_mut() {
                let scaled: Vec<f64> = d.iter().map(|v| 2.0 * scale * v / n as f64).collect();
                forward_diff_adjoint(&scaled, shape, a, &mut g[c * n..(c + 1) * n]);
            }
        }
    }
    total / n as f64
}

/// `(1/N) * sum (div u)^2`, accumulating `scale * grad` if asked.
pub fn divergence_penalty_backward(u: &[f64], shape: Shape3, scale: f64, grad: Option<&mut [f64]>) -> Result<f64> {
    let n = shape.len();
    let div = divergence_f64(u, shape)?;
    let value = div.iter().map(|v| v * v).sum::<f64>() / n as f64;
    if let Some(g) = grad {
        let scaled: Vec<f64> = div.iter().map(|v| 2.0 * scale * v / n as f64).collect();
        for a in 0..3 {
            forward_diff_adjoint(&scaled, shape, a, &mut g[a * n..(a + 1) * n]);
        }
    }
    Ok(value)
}

pub fn smoothness(u: &DisplacementField) -> f64 {
    smoothness_backward(&u.to_f64(), u.shape(), 1.0, None)
}

pub fn divergence_penalty(u: &DisplacementField) -> Result<f64> {
    divergence_penalty_backward(&u.to_f64(), u.shape(), 1.0, None)
}
