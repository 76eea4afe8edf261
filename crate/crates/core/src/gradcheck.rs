//! Finite-difference checks of every hand-written backward pass.

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::losses::mi::{multi_axis_mi_backward, soft_mi_2d_backward, SoftBinning};
use crate::losses::ncc::ncc_backward;
use crate::losses::regularize::{divergence_penalty_backward, smoothness_backward};
use crate::nn::{Features, NetworkConfig, NetworkMode, RegistrationNetwork};
use crate::volume::Shape3;
use crate::warp::{warp_backward, warp_f64};

/// Small enough that a step rarely crosses a LeakyReLU or max-pool kink
/// of the network, large enough to stay clear of f64 round-off.
const STEP: f64 = 1e-6;
/// Gradients smaller than this are compared absolutely.
const FLOOR: f64 = 1e-6;
const PROBES: usize = 24;

#[derive(Clone, Debug, Serialize)]
pub struct GradCheck {
    pub name: &'static str,
    pub max_rel_error: f64,
    pub probes: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Largest relative error between `grad` and central differences of `f`
/// over the coordinates in `probes`.
pub fn compare(mut f: impl FnMut(&[f64]) -> f64, x: &[f64], grad: &[f64], probes: &[usize]) -> f64 {
    let mut y = x.to_vec();
    probes
        .iter()
        .map(|&i| {
            y[i] = x[i] + STEP;
            let plus = f(&y);
            y[i] = x[i] - STEP;
            let minus = f(&y);
            y[i] = x[i];
            relative_error(grad[i], (plus - minus) / (2.0 * STEP))
        })
        .fold(0.0, f64::max)
}

fn probes(rng: &mut ChaCha8Rng, len: usize) -> Vec<usize> {
    (0..PROBES.min(len)).map(|_| rng.random_range(0..len)).collect()
}

/// Smooth random image in `[0, 1]` so that finite differences of the soft
/// histogram stay well conditioned.
fn image(rng: &mut ChaCha8Rng, shape: Shape3) -> Vec<f64> {
    let phase: [f64; 3] = [rng.random(), rng.random(), rng.random()];
    (0..shape.len())
        .map(|i| {
            let (x, y, z) = shape.coords(i);
            let s = (0.7 * x as f64 + 6.0 * phase[0]).sin() * (0.5 * y as f64 + 6.0 * phase[1]).cos()
                + 0.5 * (0.9 * z as f64 + 6.0 * phase[2]).sin();
            (0.5 + 0.3 * s + 0.05 * rng.random::<f64>()).clamp(0.0, 1.0)
        })
        .collect()
}

fn field(rng: &mut ChaCha8Rng, n: usize, amp: f64) -> Vec<f64> {
    (0..3 * n).map(|_| amp * (rng.random::<f64>() * 2.0 - 1.0)).collect()
}

/// Runs every check on random 8x8x8 inputs derived from `seed`.
pub fn gradient_suite(seed: u64) -> Vec<GradCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shape = Shape3::cube(8);
    let n = shape.len();
    let sb = SoftBinning::new(16, 0.5 / 15.0).expect("valid binning");
    let fixed = image(&mut rng, shape);
    let moving = image(&mut rng, shape);
    let u = field(&mut rng, n, 1.3);
    let mut out = Vec::new();
    let mut push = |name, max_rel_error| out.push(GradCheck { name, max_rel_error, probes: PROBES });

    // warp: <warp(m, u), w> with respect to u and to m
    let w: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let (mut gm, mut gu) = (vec![0.0; n], vec![0.0; 3 * n]);
    warp_backward(&moving, shape, &u, &w, Some(&mut gm), Some(&mut gu));
    let pu = probes(&mut rng, 3 * n);
    let e1 = compare(|uu| dot(&warp_f64(&moving, shape, uu), &w), &u, &gu, &pu);
    let pm = probes(&mut rng, n);
    let e2 = compare(|mm| dot(&warp_f64(mm, shape, &u), &w), &moving, &gm, &pm);
    push("warp", e1.max(e2));

    // soft_mi_2d on one 8x8 slice pair, both arguments
    let a = &fixed[..64];
    let b = &moving[..64];
    let (mut ga, mut gb) = (vec![0.0; 64], vec![0.0; 64]);
    soft_mi_2d_backward(a, b, sb, 1.0, Some(&mut ga), Some(&mut gb));
    let p = probes(&mut rng, 64);
    let ea = compare(|x| soft_mi_2d_backward(x, b, sb, 1.0, None, None), a, &ga, &p);
    let eb = compare(|x| soft_mi_2d_backward(a, x, sb, 1.0, None, None), b, &gb, &p);
    push("soft_mi_2d", ea.max(eb));

    let mut g = vec![0.0; n];
    multi_axis_mi_backward(&fixed, &moving, shape, sb, 1.0, None, Some(&mut g));
    let p = probes(&mut rng, n);
    push("multi_axis_mi", compare(|x| multi_axis_mi_backward(&fixed, x, shape, sb, 1.0, None, None), &moving, &g, &p));

    let (mut gf, mut gw) = (vec![0.0; n], vec![0.0; n]);
    ncc_backward(&fixed, &moving, 1.0, Some(&mut gf), Some(&mut gw));
    let e1 = compare(|x| ncc_backward(&fixed, x, 1.0, None, None), &moving, &gw, &p);
    let e2 = compare(|x| ncc_backward(x, &moving, 1.0, None, None), &fixed, &gf, &p);
    push("ncc_loss", e1.max(e2));

    let mut g = vec![0.0; 3 * n];
    smoothness_backward(&u, shape, 1.0, Some(&mut g));
    push("smoothness", compare(|x| smoothness_backward(x, shape, 1.0, None), &u, &g, &pu));

    let mut g = vec![0.0; 3 * n];
    divergence_penalty_backward(&u, shape, 1.0, Some(&mut g)).expect("8^3 is large enough");
    push(
        "divergence_penalty",
        compare(|x| divergence_penalty_backward(x, shape, 1.0, None).expect("valid"), &u, &g, &pu),
    );

    push("network", network_check(&mut rng, shape, &fixed, &moving));
    out
}

/// Gradient of `<net(x), w>` with respect to sampled parameters of every
/// tensor of the tiny configuration.
fn network_check(rng: &mut ChaCha8Rng, shape: Shape3, fixed: &[f64], moving: &[f64]) -> f64 {
    let mut net = RegistrationNetwork::<f64>::build(NetworkConfig::tiny(), NetworkMode::Student, rng.random())
        .expect("tiny config is valid");
    // move off the zero-initialised head so every tensor receives gradient
    for p in net.params_mut() {
        *p += 0.2 * (rng.random::<f64>() - 0.5);
    }
    let input = net.input_from_slices(shape, fixed, moving).expect("8^3 is divisible by 8");
    let w: Vec<f64> = (0..3 * shape.len()).map(|_| rng.random::<f64>() - 0.5).collect();
    let (_, cache) = net.forward_cached(input.clone());
    let mut grad = vec![0.0; net.param_count()];
    net.backward(&cache, &Features { channels: 3, shape, data: w.clone() }, &mut grad);
    let params = net.params().to_vec();
    let probes: Vec<usize> = net
        .tensors()
        .iter()
        .flat_map(|t| [t.offset, t.offset + rng.random_range(0..t.len), t.offset + t.len - 1])
        .collect();
    let mut probe_net = net.clone();
    compare(
        |p| {
            probe_net.params_mut().copy_from_slice(p);
            probe_net.forward_features(&input).data.iter().zip(&w).map(|(a, b)| a * b).sum()
        },
        &params,
        &grad,
        &probes,
    )
}
