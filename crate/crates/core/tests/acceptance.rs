//! Acceptance harness: one PASS/FAIL line per criterion. Exits non-zero on
//! a failure only when `ACCEPTANCE_STRICT=1`, so the workspace test run
//! reports rather than aborts on criteria that do not hold.

use std::collections::HashMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use mareg_core::eval::{dice, evaluate_pair, iou, mean_pmm, patchwise_mi_map, EvalInputs, PmmConfig, REPORT_SCHEMA};
use mareg_core::gradcheck::gradient_suite;
use mareg_core::losses::{divergence_penalty, ncc_loss, smoothness};
use mareg_core::nn::checkpoint::encode_checkpoint;
use mareg_core::nn::{NetworkConfig, NetworkMode, RegistrationNetwork};
use mareg_core::synth::{generate_pair, GeneratorConfig};
use mareg_core::train::{
    distill_student, pretrain_teacher, tto_register, tto_register_with_clock, ManualClock, StopReason, TrainConfig, TtoConfig,
};
use mareg_core::warp::warp;
use mareg_core::{DisplacementField, Mask3D, Shape3, Volume3D};
use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::Value;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

/// Generator setting giving a mean ground-truth displacement near 2 voxels.
fn recovery_generator() -> GeneratorConfig {
    GeneratorConfig { sigma: 3.8, ..Default::default() }
}

fn random(shape: Shape3, seed: u64) -> Volume3D {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Volume3D::from_fn(shape, |_, _, _| rng.random::<f32>())
}

fn criterion_1() -> Outcome {
    let t = RegistrationNetwork::<f32>::build(NetworkConfig::teacher(), NetworkMode::Teacher, 0).unwrap().param_count();
    let s = RegistrationNetwork::<f32>::build(NetworkConfig::student(), NetworkMode::Student, 0).unwrap().param_count();
    let ratio = t as f64 / s as f64;
    let within = |n: usize, target: f64| (n as f64 - target).abs() <= 0.15 * target;
    outcome(within(t, 0.6e6) && within(s, 0.23e6) && ratio >= 2.5, format!("teacher {t}, student {s}, ratio {ratio:.3}"))
}

fn criterion_2() -> Outcome {
    let mut worst: HashMap<&str, f64> = HashMap::new();
    for seed in 0..5 {
        for c in gradient_suite(seed) {
            let e = worst.entry(c.name).or_insert(0.0);
            *e = e.max(c.max_rel_error);
        }
    }
    let required = ["warp", "soft_mi_2d", "multi_axis_mi", "ncc_loss", "smoothness", "divergence_penalty", "network"];
    let complete = required.iter().all(|r| worst.contains_key(r));
    let max = worst.values().cloned().fold(0.0, f64::max);
    let mut names: Vec<_> = worst.iter().map(|(k, v)| format!("{k} {v:.1e}")).collect();
    names.sort();
    outcome(complete && max < 1e-3, format!("max relative error {max:.2e} over 5 seeds ({})", names.join(", ")))
}

/// Plug-in MI from a hash-map joint histogram of explicit samples.
fn brute_mi(a: &[f32], b: &[f32], bins: usize) -> f64 {
    let bin = |v: f32| ((v.clamp(0.0, 1.0) as f64 * bins as f64) as usize).min(bins - 1);
    let n = a.len() as f64;
    let mut joint: HashMap<(usize, usize), f64> = HashMap::new();
    let mut pa: HashMap<usize, f64> = HashMap::new();
    let mut pb: HashMap<usize, f64> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *joint.entry((bin(x), bin(y))).or_default() += 1.0 / n;
        *pa.entry(bin(x)).or_default() += 1.0 / n;
        *pb.entry(bin(y)).or_default() += 1.0 / n;
    }
    joint.iter().map(|(&(i, j), &p)| p * (p / (pa[&i] * pb[&j])).ln()).sum()
}

fn patch(v: &Volume3D, o: [usize; 3], p: usize) -> Vec<f32> {
    let mut out = Vec::with_capacity(p * p * p);
    for z in o[2]..o[2] + p {
        for y in o[1]..o[1] + p {
            for x in o[0]..o[0] + p {
                out.push(v.get(x, y, z));
            }
        }
    }
    out
}

fn criterion_3() -> Outcome {
    let s = Shape3::cube(12);
    let (f, m) = (random(s, 31), random(s, 32));
    let mut worst = 0.0f64;
    let disjoint = PmmConfig { patch: 4, stride: 4, bins: 6, ..Default::default() };
    let map = patchwise_mi_map(&f, &m, None, &disjoint).unwrap();
    for i in 0..s.len() {
        let (x, y, z) = s.coords(i);
        let expect = brute_mi(&patch(&f, [x / 4 * 4, y / 4 * 4, z / 4 * 4], 4), &patch(&m, [x / 4 * 4, y / 4 * 4, z / 4 * 4], 4), 6);
        worst = worst.max((map.values[i] - expect).abs());
    }
    let (p, st) = (4, 3);
    let overlapping = PmmConfig { patch: p, stride: st, bins: 5, ..Default::default() };
    let map = patchwise_mi_map(&f, &m, None, &overlapping).unwrap();
    let origins: Vec<usize> = (0..).map(|k| k * st).take_while(|&o| o + p <= 12).collect();
    let mut coverage_ok = true;
    for i in 0..s.len() {
        let (x, y, z) = s.coords(i);
        let (mut count, mut sum) = (0u32, 0.0);
        for &a in &origins {
            for &b in &origins {
                for &c in &origins {
                    if (c..c + p).contains(&x) && (b..b + p).contains(&y) && (a..a + p).contains(&z) {
                        count += 1;
                        sum += brute_mi(&patch(&f, [c, b, a], p), &patch(&m, [c, b, a], p), 5);
                    }
                }
            }
        }
        coverage_ok &= map.coverage[i] == count;
        if count > 0 {
            worst = worst.max((map.values[i] - sum / count as f64).abs());
        }
    }
    outcome(worst < 1e-9 && coverage_ok, format!("max deviation from brute force {worst:.1e}, coverage counts {}", if coverage_ok { "exact" } else { "wrong" }))
}

fn criterion_4() -> Outcome {
    let s = Shape3::new(12, 10, 8);
    let v = random(s, 41);
    let w = warp(&v, &DisplacementField::zeros(s)).unwrap();
    let id_err = v.data().iter().zip(w.data()).map(|(a, b)| (a - b).abs()).fold(0.0f32, f32::max) as f64;
    let other = random(s, 42);
    let base = ncc_loss(&v, &other).unwrap();
    let mut ncc_err = 0.0f64;
    for (a, b) in [(0.25f32, -3.0f32), (7.5, 0.0), (1.0, 50.0)] {
        let r = other.with_data(other.data().iter().map(|x| a * x + b).collect()).unwrap();
        ncc_err = ncc_err.max((ncc_loss(&v, &r).unwrap() - base).abs());
    }
    let mut exact = true;
    for c in [[0.0f32, 0.0, 0.0], [1.5, -2.0, 0.25], [-7.0, 3.0, 11.0]] {
        let u = DisplacementField::constant(s, c);
        exact &= smoothness(&u) == 0.0 && divergence_penalty(&u).unwrap() == 0.0;
    }
    outcome(
        id_err < 1e-6 && ncc_err < 1e-6 && exact,
        format!("identity error {id_err:.1e}, ncc rescale error {ncc_err:.1e}, constant-field penalties {}", if exact { "exactly 0" } else { "non-zero" }),
    )
}

/// Desk-scale teacher and distilled student, trained once and shared by
/// criteria 5 and 6.
struct Models {
    teacher: RegistrationNetwork<f32>,
    student: RegistrationNetwork<f32>,
    seconds: f64,
}

fn train_models() -> Models {
    let start = Instant::now();
    let gen = recovery_generator();
    let teacher_cfg = TrainConfig { epochs: 20, pairs_per_epoch: 20, shape: Shape3::cube(32), seed: 1, ..Default::default() };
    let teacher = pretrain_teacher(&teacher_cfg, &gen).unwrap().network;
    let student0 = RegistrationNetwork::build(NetworkConfig::student(), NetworkMode::Student, 1).unwrap();
    let distill_cfg = TrainConfig { epochs: 50, pairs_per_epoch: 50, shape: Shape3::cube(32), seed: 1, ..Default::default() };
    let student = distill_student(&teacher, student0, &distill_cfg, &gen).unwrap().network;
    Models { teacher, student, seconds: start.elapsed().as_secs_f64() }
}

fn criterion_5(models: &Models) -> Outcome {
    let gen = recovery_generator();
    let cfg = TtoConfig::default();
    let pmm = PmmConfig::default();
    let (mut epe_zero, mut epe_tto) = (0.0, 0.0);
    let mut pmm_up = 0;
    let mut within_budget = true;
    let mut per_pair = Vec::new();
    for k in 0..10u64 {
        let p = generate_pair(50_000 + k, Shape3::cube(64), &gen).unwrap();
        let r = tto_register(&models.student, &p.fixed, &p.moving, &cfg).unwrap();
        let zero = DisplacementField::zeros(p.fixed.shape()).mean_endpoint_error(&p.gt_ddf).unwrap();
        let got = r.ddf.mean_endpoint_error(&p.gt_ddf).unwrap();
        epe_zero += zero / 10.0;
        epe_tto += got / 10.0;
        let before = mean_pmm(&patchwise_mi_map(&p.fixed.normalize_intensity(), &p.moving.normalize_intensity(), None, &pmm).unwrap(), None).unwrap();
        let after = mean_pmm(&patchwise_mi_map(&p.fixed.normalize_intensity(), &r.warped.normalize_intensity(), None, &pmm).unwrap(), None).unwrap();
        pmm_up += usize::from(after > before);
        // the budget is checked before each epoch, so one epoch may overshoot
        within_budget &= r.seconds <= cfg.max_seconds + r.seconds / r.epochs_run as f64 + 1.0;
        per_pair.push(format!("{:.2}/{:.2}", got, zero));
    }
    let reduction = 1.0 - epe_tto / epe_zero;
    outcome(
        reduction >= 0.5 && pmm_up == 10 && within_budget,
        format!(
            "EPE {epe_zero:.3} -> {epe_tto:.3} voxels (reduction {:.1}%, need 50%), PMM increased on {pmm_up}/10, budget {} [per pair tto/zero: {}]",
            100.0 * reduction,
            if within_budget { "kept" } else { "exceeded" },
            per_pair.join(" ")
        ),
    )
}

fn criterion_6(models: &Models) -> Outcome {
    let gen = recovery_generator();
    let (mut zero, mut t, mut s) = (0.0, 0.0, 0.0);
    for k in 0..5u64 {
        let p = generate_pair(60_000 + k, Shape3::cube(32), &gen).unwrap();
        let (f, m) = (p.fixed.normalize_intensity(), p.moving.normalize_intensity());
        zero += DisplacementField::zeros(f.shape()).mean_endpoint_error(&p.gt_ddf).unwrap() / 5.0;
        t += models.teacher.forward(&f, &m).unwrap().mean_endpoint_error(&p.gt_ddf).unwrap() / 5.0;
        s += models.student.forward(&f, &m).unwrap().mean_endpoint_error(&p.gt_ddf).unwrap() / 5.0;
    }
    let (rt, rs) = (zero - t, zero - s);
    outcome(
        rt > 0.0 && rs >= 0.8 * rt,
        format!(
            "held-out EPE zero {zero:.4}, teacher {t:.4} (reduction {rt:+.4}), student {s:.4} (reduction {rs:+.4}); student/teacher {} (training {:.0} s)",
            if rt > 0.0 { format!("{:.2}", rs / rt) } else { "undefined: teacher did not reduce EPE".into() },
            models.seconds
        ),
    )
}

fn criterion_7() -> Outcome {
    let p = generate_pair(70, Shape3::cube(16), &GeneratorConfig::default()).unwrap();
    let net = RegistrationNetwork::build(NetworkConfig::student(), NetworkMode::Student, 7).unwrap();
    let cfg = TtoConfig::default();
    let mut lines = Vec::new();
    let mut ok = true;
    // seconds per epoch -> expected (epochs, reason) under min(100 epochs, 60 s)
    for (tick, epochs, reason) in [
        (0.0, 100, StopReason::EpochBudget),
        (0.5, 100, StopReason::EpochBudget),
        (1.0, 60, StopReason::TimeBudget),
        (25.0, 3, StopReason::TimeBudget),
        (120.0, 1, StopReason::TimeBudget),
    ] {
        let r = tto_register_with_clock(&net, &p.fixed, &p.moving, &cfg, &ManualClock::new(tick)).unwrap();
        ok &= r.epochs_run == epochs && r.stop_reason == reason && r.loss_trace.len() == epochs;
        lines.push(format!("{tick} s/epoch: {} epochs {:?}", r.epochs_run, r.stop_reason));
    }
    outcome(ok, lines.join("; "))
}

fn validate(schema: &Value, v: &Value, path: &str) -> Result<(), String> {
    if let Some(t) = schema.get("type") {
        let types: Vec<&str> = match t {
            Value::String(s) => vec![s.as_str()],
            Value::Array(a) => a.iter().map(|x| x.as_str().unwrap()).collect(),
            _ => unreachable!(),
        };
        let ok = types.iter().any(|&t| match t {
            "object" => v.is_object(),
            "array" => v.is_array(),
            "string" => v.is_string(),
            "number" => v.is_number(),
            "integer" => v.is_u64() || v.is_i64(),
            "boolean" => v.is_boolean(),
            "null" => v.is_null(),
            _ => false,
        });
        if !ok {
            return Err(format!("{path}: expected {types:?}, got {v}"));
        }
    }
    if let (Some(x), Some(min)) = (v.as_f64(), schema.get("minimum").and_then(Value::as_f64)) {
        if x < min {
            return Err(format!("{path}: {x} < {min}"));
        }
    }
    if let (Some(x), Some(max)) = (v.as_f64(), schema.get("maximum").and_then(Value::as_f64)) {
        if x > max {
            return Err(format!("{path}: {x} > {max}"));
        }
    }
    if let Some(e) = schema.get("enum").and_then(Value::as_array) {
        if !e.contains(v) {
            return Err(format!("{path}: {v} not in {e:?}"));
        }
    }
    if let Some(obj) = v.as_object() {
        let props = schema.get("properties").and_then(Value::as_object);
        for r in schema.get("required").and_then(Value::as_array).into_iter().flatten() {
            if !obj.contains_key(r.as_str().unwrap()) {
                return Err(format!("{path}: missing {r}"));
            }
        }
        for (k, child) in obj {
            match props.and_then(|p| p.get(k)) {
                Some(s) => validate(s, child, &format!("{path}.{k}"))?,
                None if schema.get("additionalProperties") == Some(&Value::Bool(false)) => {
                    return Err(format!("{path}: unexpected key {k}"))
                }
                None => {}
            }
        }
    }
    if let (Some(items), Some(arr)) = (schema.get("items"), v.as_array()) {
        for (i, x) in arr.iter().enumerate() {
            validate(items, x, &format!("{path}[{i}]"))?;
        }
    }
    Ok(())
}

fn criterion_8() -> Outcome {
    let s = Shape3::cube(16);
    let cube = |x0: usize| Mask3D::from_fn(s, |x, y, z| (x0..x0 + 8).contains(&x) && y < 8 && z < 8);
    let (a, b) = (cube(0), cube(4));
    let (d, j) = (dice(&a, &b).unwrap(), iou(&a, &b).unwrap());
    let closed = d == 0.5 && j == 1.0 / 3.0;
    let schema: Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    let p = generate_pair(80, Shape3::cube(32), &GeneratorConfig::default()).unwrap();
    let mut valid = 0;
    let labels = p.fixed_labels.num_labels;
    for l in 0..labels as u8 {
        let fm = Mask3D::new(p.fixed.shape(), p.fixed_labels.mask(l)).unwrap();
        let mm = Mask3D::new(p.fixed.shape(), p.moving_labels.mask(l)).unwrap();
        let inputs = EvalInputs { fixed_id: "fixed".into(), moving_id: format!("moving/label{l}"), domain: None, masks: Some((&fm, &mm)) };
        let (report, _) = evaluate_pair(&p.fixed, &p.moving, &inputs, &PmmConfig::default()).unwrap();
        valid += usize::from(validate(&schema, &serde_json::to_value(&report).unwrap(), "$").is_ok());
    }
    outcome(closed && valid == labels, format!("shifted cubes dice {d}, iou {j}; {valid}/{labels} per-label reports schema-valid"))
}

fn criterion_9() -> Outcome {
    let gen = GeneratorConfig::default();
    let shape = Shape3::cube(16);
    let mut checks = Vec::new();

    let (p1, p2) = (generate_pair(90, shape, &gen).unwrap(), generate_pair(90, shape, &gen).unwrap());
    checks.push(("synthesis", p1 == p2));

    let tc = TrainConfig { epochs: 2, pairs_per_epoch: 2, shape, seed: 9, learning_rate: 1e-3, ..Default::default() };
    let (t1, t2) = (pretrain_teacher(&tc, &gen).unwrap(), pretrain_teacher(&tc, &gen).unwrap());
    checks.push(("teacher checkpoint", encode_checkpoint(&t1.network) == encode_checkpoint(&t2.network)));
    checks.push(("teacher trace", t1.losses() == t2.losses()));

    let student = || RegistrationNetwork::build(NetworkConfig::student(), NetworkMode::Student, 9).unwrap();
    let (s1, s2) = (distill_student(&t1.network, student(), &tc, &gen).unwrap(), distill_student(&t1.network, student(), &tc, &gen).unwrap());
    checks.push(("student checkpoint", encode_checkpoint(&s1.network) == encode_checkpoint(&s2.network)));
    checks.push(("student trace", s1.losses() == s2.losses()));

    let cfg = TtoConfig { max_epochs: 5, learning_rate: 1e-3, ..Default::default() };
    let (r1, r2) = (tto_register(&s1.network, &p1.fixed, &p1.moving, &cfg).unwrap(), tto_register(&s1.network, &p1.fixed, &p1.moving, &cfg).unwrap());
    checks.push(("tto field", r1.ddf == r2.ddf && r1.warped == r2.warped));
    checks.push(("tto trace", r1.loss_trace == r2.loss_trace));

    let inputs = EvalInputs { fixed_id: "f".into(), moving_id: "m".into(), ..Default::default() };
    let report = || serde_json::to_string(&evaluate_pair(&p1.fixed, &r1.warped, &inputs, &PmmConfig::default()).unwrap().0).unwrap();
    checks.push(("report", report() == report()));

    let failed: Vec<_> = checks.iter().filter(|c| !c.1).map(|c| c.0).collect();
    let detail = if failed.is_empty() {
        format!("{} reruns bit-identical", checks.iter().map(|c| c.0).collect::<Vec<_>>().join(", "))
    } else {
        format!("differs on rerun: {}", failed.join(", "))
    };
    outcome(failed.is_empty(), detail)
}

fn run(id: usize, name: &str, f: impl FnOnce() -> Outcome) -> bool {
    let start = Instant::now();
    let o = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|e| {
        let msg = e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()));
        outcome(false, format!("panicked: {}", msg.unwrap_or_default()))
    });
    println!(
        "criterion {id} [{name}]: {} ({:.1} s) {}",
        if o.pass { "PASS" } else { "FAIL" },
        start.elapsed().as_secs_f64(),
        o.detail
    );
    o.pass
}

fn main() {
    let mut passed = vec![
        run(1, "architecture", criterion_1),
        run(2, "gradients", criterion_2),
        run(3, "mi oracle", criterion_3),
        run(4, "identity and invariance", criterion_4),
    ];
    eprintln!("training desk-scale teacher and student for criteria 5 and 6 ...");
    let models = catch_unwind(train_models).ok();
    let with_models = |f: fn(&Models) -> Outcome| match &models {
        Some(m) => f(m),
        None => outcome(false, "desk-scale training failed"),
    };
    passed.push(run(5, "synthetic recovery", || with_models(criterion_5)));
    passed.push(run(6, "distillation efficacy", || with_models(criterion_6)));
    passed.push(run(7, "stopping rule", criterion_7));
    passed.push(run(8, "overlap and report", criterion_8));
    passed.push(run(9, "determinism", criterion_9));
    let n = passed.iter().filter(|&&p| p).count();
    println!("acceptance: {n}/{} criteria pass", passed.len());
    if n < passed.len() && std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1") {
        std::process::exit(1);
    }
}
