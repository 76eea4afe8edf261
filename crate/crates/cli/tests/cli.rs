use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use mareg_core::eval::{mean_pmm, patchwise_mi_map, PmmConfig, REPORT_SCHEMA};
use mareg_core::io::{load_volume, save_volume, VolumeFormat};
use mareg_core::nn::{save_checkpoint, NetworkConfig, NetworkMode, RegistrationNetwork};
use mareg_core::synth::{generate_pair, GeneratorConfig};
use mareg_core::warp::warp;
use mareg_core::{DisplacementField, Shape3, Volume3D};
use serde_json::Value;
use tempfile::TempDir;

fn mareg(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mareg")).current_dir(dir).args(args).output().unwrap()
}

fn ok(out: &Output) -> Value {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    serde_json::from_slice(&out.stdout).unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn json(path: impl AsRef<Path>) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn student_checkpoint(dir: &Path) -> PathBuf {
    let net = RegistrationNetwork::<f32>::build(NetworkConfig::student(), NetworkMode::Student, 11).unwrap();
    let path = dir.join("student.ckpt");
    save_checkpoint(&net, &path).unwrap();
    path
}

fn write(dir: &Path, name: &str, v: &Volume3D) -> String {
    let p = dir.join(name);
    save_volume(v, &p, VolumeFormat::Nifti).unwrap();
    p.to_string_lossy().into_owned()
}

fn read(path: impl AsRef<Path>) -> Volume3D {
    load_volume(path, VolumeFormat::Nifti).unwrap()
}

fn files_under(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
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

const SMALL: &[&str] = &["--synthesize.count", "2", "--synthesize.shape", "[16,16,16]"];

#[test]
fn synthesize_writes_pairs_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let run = |out: &str| ok(&mareg(tmp.path(), &[&["synthesize", "--out", out], SMALL].concat()));
    assert_eq!(run("a")["pairs"], 2);
    let a = tmp.path().join("a");
    let manifest = json(a.join("manifest.json"));
    let pairs = manifest["pairs"].as_array().unwrap();
    assert_eq!(pairs.len(), 2);
    for (k, p) in pairs.iter().enumerate() {
        assert_eq!(p["index"], k);
        for key in ["fixed", "moving", "fixed_labels", "moving_labels"] {
            assert!(a.join(p[key].as_str().unwrap()).is_file());
        }
        assert_eq!(p["gt_ddf"].as_array().unwrap().len(), 3);
    }
    assert_ne!(pairs[0]["seed"], pairs[1]["seed"]);
    assert!(a.join("pair_0000").is_dir() && a.join("pair_0001").is_dir());

    run("b");
    assert_eq!(files_under(&a), files_under(&tmp.path().join("b")));
    // resuming with the same config leaves the data as it was
    run("a");
    assert_eq!(files_under(&a), files_under(&tmp.path().join("b")));
}

#[test]
fn tampered_manifest_is_refused() {
    let tmp = TempDir::new().unwrap();
    ok(&mareg(tmp.path(), &[&["synthesize", "--out", "d"], SMALL].concat()));
    let path = tmp.path().join("d/manifest.json");
    let mut m = json(&path);
    m["config_hash"] = Value::String("0".repeat(64));
    fs::write(&path, m.to_string()).unwrap();
    let before = files_under(&tmp.path().join("d"));
    let out = mareg(tmp.path(), &[&["synthesize", "--out", "d"], SMALL].concat());
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("refusing to mix"));
    assert_eq!(files_under(&tmp.path().join("d")), before);

    // a different seed is a different dataset
    ok(&mareg(tmp.path(), &[&["synthesize", "--out", "e"], SMALL].concat()));
    let out = mareg(tmp.path(), &[&["synthesize", "--out", "e", "--seed", "9"], SMALL].concat());
    assert_eq!(code(&out), 1);
}

const TINY_TRAIN: &[&str] = &["--teacher.epochs", "3", "--teacher.pairs_per_epoch", "2", "--teacher.shape", "[16,16,16]"];

#[test]
fn teacher_smoke_run_logs_and_reproduces() {
    let tmp = TempDir::new().unwrap();
    let a = ok(&mareg(tmp.path(), &[&["train-teacher", "--out", "a"], TINY_TRAIN].concat()));
    let b = ok(&mareg(tmp.path(), &[&["train-teacher", "--out", "b"], TINY_TRAIN].concat()));
    assert_eq!(a["checksum"], b["checksum"]);
    assert_eq!(a["parameters"], 609_571);
    assert_eq!(
        fs::read(tmp.path().join("a/teacher_final.ckpt")).unwrap(),
        fs::read(tmp.path().join("b/teacher_final.ckpt")).unwrap()
    );

    let log = fs::read_to_string(tmp.path().join("a/teacher_log.jsonl")).unwrap();
    let records: Vec<Value> = log.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
    assert_eq!(records.len(), 3);
    let mut last_wall = 0.0;
    for (k, r) in records.iter().enumerate() {
        let obj = r.as_object().unwrap();
        assert_eq!(obj.len(), 3, "{r}");
        assert_eq!(r["epoch"].as_u64(), Some(k as u64));
        assert!(r["mean_loss"].as_f64().unwrap().is_finite());
        let wall = r["wall_seconds"].as_f64().unwrap();
        assert!(wall >= last_wall);
        last_wall = wall;
    }

    // finished stages are not silently overwritten
    let again = mareg(tmp.path(), &[&["train-teacher", "--out", "a"], TINY_TRAIN].concat());
    assert_eq!(code(&again), 1);
    let forced = ok(&mareg(tmp.path(), &[&["train-teacher", "--out", "a", "--force"], TINY_TRAIN].concat()));
    assert_eq!(forced["checksum"], a["checksum"]);
    assert_eq!(fs::read_to_string(tmp.path().join("a/teacher_log.jsonl")).unwrap().lines().count(), 3);
}

#[test]
fn distill_needs_a_teacher() {
    let tmp = TempDir::new().unwrap();
    let out = mareg(tmp.path(), &["distill", "--teacher", "missing.ckpt", "--out", "s"]);
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("teacher checkpoint not found: missing.ckpt"));
    assert!(!tmp.path().join("s").exists());
}

#[test]
fn distill_smoke_run() {
    let tmp = TempDir::new().unwrap();
    ok(&mareg(tmp.path(), &[&["train-teacher", "--out", "t"], TINY_TRAIN].concat()));
    let args = ["--distill.epochs", "2", "--distill.pairs_per_epoch", "2", "--distill.shape", "[16,16,16]"];
    let s = ok(&mareg(tmp.path(), &[&["distill", "--teacher", "t/teacher_final.ckpt", "--out", "s"], &args[..]].concat()));
    assert_eq!(s["parameters"], 236_195);
    assert_eq!(s["epochs"], 2);
    assert!(tmp.path().join("s/student_final.ckpt").is_file());
}

#[test]
fn self_registration_reproduces_the_input() {
    let tmp = TempDir::new().unwrap();
    let ckpt = student_checkpoint(tmp.path());
    let p = generate_pair(5, Shape3::cube(32), &GeneratorConfig::default()).unwrap();
    let f = write(tmp.path(), "f.nii", &p.fixed);
    let res = ok(&mareg(tmp.path(), &["register", "--checkpoint", ckpt.to_str().unwrap(), "--fixed", &f, "--moving", &f, "--out", "r", "--max-epochs", "5"]));
    assert_eq!(res.as_array().unwrap().len(), 1);
    let w = read(tmp.path().join("r/frame_000/warped.nii"));
    let (lo, hi) = p.fixed.data().iter().fold((f32::MAX, f32::MIN), |(a, b), &v| (a.min(v), b.max(v)));
    let mae: f64 = w.data().iter().zip(p.fixed.data()).map(|(a, b)| (a - b).abs() as f64).sum::<f64>() / w.data().len() as f64;
    assert!(mae < 0.01 * (hi - lo) as f64, "mae {mae}, range {}", hi - lo);
    let run = json(tmp.path().join("r/register.json"));
    assert_eq!(run["frames"][0]["epochs_run"], 5);
    assert_eq!(run["frames"][0]["stop_reason"], "epoch_budget");
}

#[test]
fn directory_input_gives_one_ordered_output_per_frame() {
    let tmp = TempDir::new().unwrap();
    let ckpt = student_checkpoint(tmp.path());
    let frames = tmp.path().join("frames");
    fs::create_dir(&frames).unwrap();
    let p = generate_pair(6, Shape3::cube(16), &GeneratorConfig::default()).unwrap();
    let f = write(tmp.path(), "f.nii", &p.fixed);
    // written out of order on purpose
    for (name, scale) in [("t2.nii", 3.0f32), ("t0.nii", 1.0), ("t1.nii", 2.0)] {
        write(&frames, name, &p.moving.with_data(p.moving.data().iter().map(|v| v * scale).collect()).unwrap());
    }
    fs::write(frames.join("notes.txt"), "not a volume").unwrap();
    let res = ok(&mareg(tmp.path(), &["register", "--checkpoint", ckpt.to_str().unwrap(), "--fixed", &f, "--moving", "frames", "--out", "r", "--max-epochs", "1"]));
    let res = res.as_array().unwrap();
    assert_eq!(res.len(), 3);
    for (k, r) in res.iter().enumerate() {
        assert_eq!(r["frame"], k);
        assert!(r["moving"].as_str().unwrap().ends_with(&format!("t{k}.nii")));
        assert!(tmp.path().join(format!("r/frame_{k:03}/warped.nii")).is_file());
    }
    // warping is linear in intensity, so the frames keep their scale order
    let maxes: Vec<f32> = (0..3)
        .map(|k| read(tmp.path().join(format!("r/frame_{k:03}/warped.nii"))).data().iter().cloned().fold(f32::MIN, f32::max))
        .collect();
    assert!(maxes[0] < maxes[1] && maxes[1] < maxes[2], "{maxes:?}");
}

#[test]
fn failed_registration_removes_partial_outputs() {
    let tmp = TempDir::new().unwrap();
    let ckpt = student_checkpoint(tmp.path());
    let p = generate_pair(7, Shape3::cube(16), &GeneratorConfig::default()).unwrap();
    let f = write(tmp.path(), "f.nii", &p.fixed);
    let m = write(tmp.path(), "m.nii", &p.moving);
    fs::write(tmp.path().join("broken.nii"), b"not a nifti file").unwrap();
    let out = mareg(tmp.path(), &["register", "--checkpoint", ckpt.to_str().unwrap(), "--fixed", &f, "--moving", &m, "broken.nii", "--out", "r", "--max-epochs", "1"]);
    assert_ne!(code(&out), 0);
    assert!(!tmp.path().join("r").exists());

    let out = mareg(tmp.path(), &["register", "--checkpoint", "nope.ckpt", "--fixed", &f, "--moving", &m, "--out", "r"]);
    assert_eq!(code(&out), 1);
}

#[test]
fn max_seconds_is_honoured_within_one_epoch() {
    let tmp = TempDir::new().unwrap();
    let ckpt = student_checkpoint(tmp.path());
    let p = generate_pair(8, Shape3::cube(32), &GeneratorConfig::default()).unwrap();
    let f = write(tmp.path(), "f.nii", &p.fixed);
    let m = write(tmp.path(), "m.nii", &p.moving);
    let budget = 2.0;
    let res = ok(&mareg(
        tmp.path(),
        &["register", "--checkpoint", ckpt.to_str().unwrap(), "--fixed", &f, "--moving", &m, "--out", "r", "--max-seconds", "2", "--max-epochs", "100000"],
    ));
    let r = &res[0];
    assert_eq!(r["stop_reason"], "time_budget");
    let secs = r["seconds"].as_f64().unwrap();
    let epochs = r["epochs_run"].as_f64().unwrap();
    let per_epoch = secs / epochs;
    assert!(secs >= budget);
    assert!(secs <= budget + 1.5 * per_epoch, "{secs} s over {epochs} epochs");
}

#[test]
fn evaluate_identical_inputs() {
    let tmp = TempDir::new().unwrap();
    let p = generate_pair(9, Shape3::cube(32), &GeneratorConfig::default()).unwrap();
    let f = write(tmp.path(), "f.nii", &p.fixed);
    let m = write(tmp.path(), "m.nii", &p.moving);
    let lab = write(tmp.path(), "lab.nii", &p.fixed_labels.to_volume());
    let rep = ok(&mareg(tmp.path(), &["evaluate", "--fixed", &f, "--moving", &f, "--fixed-mask", &lab, "--moving-mask", &lab, "--overlays", "--out", "e"]));
    assert_eq!(rep["dice"], 1.0);
    assert_eq!(rep["iou"], 1.0);
    assert_eq!(rep, json(tmp.path().join("e/report.json")));
    let schema: Value = serde_json::from_str(REPORT_SCHEMA).unwrap();
    validate(&schema, &rep, "$").unwrap();

    let norm = p.fixed.normalize_intensity();
    let cfg = PmmConfig::default();
    let self_mi = mean_pmm(&patchwise_mi_map(&norm, &norm, None, &cfg).unwrap(), None).unwrap();
    assert!((rep["mean_pmm"].as_f64().unwrap() - self_mi).abs() < 1e-12);
    let cross = ok(&mareg(tmp.path(), &["evaluate", "--fixed", &f, "--moving", &m, "--out", "e2"]));
    assert!(cross["dice"].is_null());
    assert!(cross["mean_pmm"].as_f64().unwrap() < self_mi);

    let pmm = read(tmp.path().join("e/pmm.nii"));
    assert_eq!(pmm.shape(), p.fixed.shape());
    for kind in ["falsecolor", "checkerboard"] {
        let index = json(tmp.path().join(format!("e/overlays/{kind}_index.json")));
        assert_eq!(index["files"].as_array().unwrap().len(), 32);
        assert!(tmp.path().join(format!("e/overlays/{kind}_0031.png")).is_file());
    }
}

#[test]
fn registration_raises_mean_pmm() {
    let tmp = TempDir::new().unwrap();
    let ckpt = student_checkpoint(tmp.path());
    let p = generate_pair(10, Shape3::cube(32), &GeneratorConfig::default()).unwrap();
    let moving = warp(&p.fixed, &DisplacementField::constant(p.fixed.shape(), [-1.5, 1.0, 0.0])).unwrap();
    let f = write(tmp.path(), "f.nii", &p.fixed);
    let m = write(tmp.path(), "m.nii", &moving);
    ok(&mareg(
        tmp.path(),
        &["register", "--checkpoint", ckpt.to_str().unwrap(), "--fixed", &f, "--moving", &m, "--out", "r", "--tto.learning_rate", "1e-3", "--max-epochs", "20"],
    ));
    let before = ok(&mareg(tmp.path(), &["evaluate", "--fixed", &f, "--moving", &m, "--out", "e0"]));
    let after = ok(&mareg(tmp.path(), &["evaluate", "--fixed", &f, "--moving", "r/frame_000/warped.nii", "--out", "e1"]));
    let (b, a) = (before["mean_pmm"].as_f64().unwrap(), after["mean_pmm"].as_f64().unwrap());
    assert!(a > b, "before {b}, after {a}");
}

#[test]
fn exit_codes() {
    let tmp = TempDir::new().unwrap();
    assert_eq!(code(&mareg(tmp.path(), &["synthesize", "--out", "d", "--no-such-key", "1"])), 1);
    assert_eq!(code(&mareg(tmp.path(), &["synthesize", "--out", "d", "--tto.max_epochs", "0"])), 1);
    fs::write(tmp.path().join("bad.json"), "{ not json").unwrap();
    assert_eq!(code(&mareg(tmp.path(), &["synthesize", "--config", "bad.json", "--out", "d"])), 1);
    fs::write(tmp.path().join("unknown.json"), r#"{"tto": {"max_epoch": 3}}"#).unwrap();
    assert_eq!(code(&mareg(tmp.path(), &["synthesize", "--config", "unknown.json", "--out", "d"])), 1);
    assert_eq!(code(&mareg(tmp.path(), &["frobnicate"])), 1);
    assert_eq!(code(&mareg(tmp.path(), &["register", "--out", "d"])), 1);
    assert_eq!(code(&mareg(tmp.path(), &["--help"])), 0);
    assert!(!tmp.path().join("d").exists());
}

#[test]
fn config_file_and_overrides_combine() {
    let tmp = TempDir::new().unwrap();
    fs::write(tmp.path().join("c.json"), r#"{"seed": 4, "synthesize": {"count": 1, "shape": [16, 16, 16]}}"#).unwrap();
    ok(&mareg(tmp.path(), &["synthesize", "--config", "c.json", "--out", "d", "--synthesize.count", "2"]));
    let m = json(tmp.path().join("d/manifest.json"));
    assert_eq!(m["seed"], 4);
    assert_eq!(m["pairs"].as_array().unwrap().len(), 2);
}
