//! Forward finite differences in voxel units. The last slice along each
//! axis replicates its neighbour, so its difference is zero.

use crate::error::{Error, Result};
use crate::volume::{DisplacementField, Shape3};

fn check(shape: Shape3) -> Result<()> {
    if shape.dims().iter().any(|&d| d < 2) {
        return Err(Error::Geometry(format!(
            "finite differences need at least 2 voxels per axis, got {shape}"
        )));
    }
    Ok(())
}

/// Forward difference of a scalar grid along one axis.
pub fn forward_diff(f: &[f64], shape: Shape3, axis: usize) -> Vec<f64> {
    let n = shape.len();
    let stride = shape.stride(axis);
    let extent = shape.dims()[axis];
    let mut out = vec![0.0; n];
    for (i, o) in out.iter_mut().enumerate() {
        let pos = (i / stride) % extent;
        if pos + 1 < extent {
            *o = f[i + stride] - f[i];
        }
    }
    out
}

/// Adds `D_axis^T g` into `acc`.
pub fn forward_diff_adjoint(g: &[f64], shape: Shape3, axis: usize, acc: &mut [f64]) {
    let stride = shape.stride(axis);
    let extent = shape.dims()[axis];
    for (j, a) in acc.iter_mut().enumerate() {
        let pos = (j / stride) % extent;
        if pos >= 1 {
            *a += g[j - stride];
        }
        if pos + 1 < extent {
            *a -= g[j];
        }
    }
}

/// Per-axis forward differences `[d/dx, d/dy, d/dz]` of a scalar grid.
pub fn spatial_gradient(f: &[f64], shape: Shape3) -> Result<[Vec<f64>; 3]> {
    check(shape)?;
    Ok(std::array::from_fn(|a| forward_diff(f, shape, a)))
}

/// Jacobian of a displacement field: `jac[c][a] = d u_c / d axis_a`.
pub fn field_gradient(u: &DisplacementField) -> Result<[[Vec<f64>; 3]; 3]> {
    let shape = u.shape();
    check(shape)?;
    let comps: Vec<Vec<f64>> = (0..3)
        .map(|c| u.component(c).iter().map(|&v| v as f64).collect())
        .collect();
    Ok(std::array::from_fn(|c| {
        std::array::from_fn(|a| forward_diff(&comps[c], shape, a))
    }))
}

/// `du_x/dx + du_y/dy + du_z/dz` of a planar field.
pub fn divergence_f64(u: &[f64], shape: Shape3) -> Result<Vec<f64>> {
    check(shape)?;
    let n = shape.len();
    let mut div = vec![0.0; n];
    for a in 0..3 {
        let d = forward_diff(&u[a * n..(a + 1) * n], shape, a);
        for (o, v) in div.iter_mut().zip(d) {
            *o += v;
        }
    }
    Ok(div)
}

pub fn divergence(u: &DisplacementField) -> Result<Vec<f64>> {
    divergence_f64(&u.to_f64(), u.shape())
}
