use std::path::Path;
use std::process::{Command, Output};

use cimpool::interchange::read_tensor;

fn cimpool(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cimpool")).args(args).env_remove("CIMPOOL_CALIB").output().unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = cimpool(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout).unwrap()
}

fn shipped_model() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/fixtures/toy_mlp.cmodel").display().to_string()
}

fn shipped_input() -> String {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("data/fixtures/toy_mlp_input.cwt").display().to_string()
}

#[test]
fn compress_is_deterministic_and_reports_stats() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.cpool");
    let b = dir.path().join("b.cpool");
    let text = ok(&["compress", &shipped_model(), "-o", a.to_str().unwrap()]);
    assert!(text.contains("69 bits/vector, 14.84x"), "{text}");
    ok(&["compress", &shipped_model(), "-o", b.to_str().unwrap()]);
    assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());

    let json: serde_json::Value =
        serde_json::from_str(&ok(&["compress", &shipped_model(), "-o", b.to_str().unwrap(), "--sparsity", "0.875", "--json"]))
            .unwrap();
    assert_eq!(json["bits_per_vector"], 21);
}

#[test]
fn run_matches_reference_within_one_step() {
    let dir = tempfile::tempdir().unwrap();
    let p = |n: &str| dir.path().join(n).display().to_string();
    ok(&["compress", &shipped_model(), "-o", &p("m.cpool")]);
    let cim: serde_json::Value = serde_json::from_str(&ok(&[
        "run", &p("m.cpool"), &shipped_input(), "-o", &p("cim.cwt"), "--trace", &p("trace.json"), "--json",
    ]))
    .unwrap();
    ok(&["run", &p("m.cpool"), &shipped_input(), "-o", &p("ref.cwt"), "--reference"]);
    let a = read_tensor(p("cim.cwt")).unwrap().to_f32();
    let b = read_tensor(p("ref.cwt")).unwrap().to_f32();
    let lsb = cim["output_lsb"].as_f64().unwrap();
    let max = a.iter().zip(&b).map(|(x, y)| (x - y).abs() as f64).fold(0.0, f64::max);
    assert!(max <= lsb * (1.0 + 1e-6), "{max} > {lsb}");

    let report: serde_json::Value =
        serde_json::from_str(&ok(&["cost", "--trace", &p("trace.json"), "--scheme", "cimpool-0.5", "--json"])).unwrap();
    assert_eq!(report["reports"].as_array().unwrap().len(), 1);
    assert!(report["reports"][0]["total_energy_uj"].as_f64().unwrap() > 0.0);
}

#[test]
fn inspect_kinds_and_errors() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.cpool");
    ok(&["compress", &shipped_model(), "-o", m.to_str().unwrap()]);
    let v: serde_json::Value = serde_json::from_str(&ok(&["inspect", m.to_str().unwrap(), "--json"])).unwrap();
    assert_eq!(v["kind"], "compressed");
    let v: serde_json::Value = serde_json::from_str(&ok(&["inspect", &shipped_model(), "--json"])).unwrap();
    assert_eq!(v["violations"], 0);
    let v: serde_json::Value = serde_json::from_str(&ok(&["inspect", &shipped_input(), "--json"])).unwrap();
    assert_eq!(v["kind"], "tensor");

    let bytes = std::fs::read(&m).unwrap();
    let cut = dir.path().join("cut.cpool");
    std::fs::write(&cut, &bytes[..bytes.len() / 2]).unwrap();
    let out = cimpool(&["inspect", cut.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("cut.cpool") && err.contains("truncated"), "{err}");
}

#[test]
fn usage_errors_exit_one() {
    assert_eq!(cimpool(&["compress"]).status.code(), Some(1));
    assert_eq!(cimpool(&["run", "a", "b", "-o", "c", "--bogus"]).status.code(), Some(1));
    assert_eq!(cimpool(&["run", "a", "b", "-o", "c", "--reference", "--adc", "ideal"]).status.code(), Some(1));
    assert_eq!(cimpool(&["cost"]).status.code(), Some(1));
    assert_eq!(cimpool(&["--help"]).status.code(), Some(0));
}

#[test]
fn data_errors_exit_two_and_name_the_flag() {
    let out = cimpool(&["cost", "--manifest", &shipped_model(), "--scheme", "fp16"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("--scheme fp16"));
    let out = cimpool(&["compress", "/nonexistent.cmodel", "-o", "/tmp/x.cpool"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("/nonexistent.cmodel"));
}

#[test]
fn gen_fixtures_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fx");
    ok(&["gen-fixtures", "-o", out.to_str().unwrap()]);
    let cmodel = out.join("tiny_cnn.cmodel");
    let cpool = dir.path().join("t.cpool");
    ok(&["compress", cmodel.to_str().unwrap(), "-o", cpool.to_str().unwrap()]);
    ok(&["run", cpool.to_str().unwrap(), out.join("tiny_cnn_input.cwt").to_str().unwrap(), "-o", dir.path().join("o.cwt").to_str().unwrap()]);
    // the shipped fixture is the seed-0 output of this command
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR")).join("data/fixtures");
    for rel in ["toy_mlp.cmodel/manifest.json", "toy_mlp_input.cwt"] {
        assert_eq!(std::fs::read(shipped.join(rel)).unwrap(), std::fs::read(out.join(rel)).unwrap(), "{rel}");
    }
    for entry in std::fs::read_dir(shipped.join("toy_mlp.cmodel/tensors")).unwrap() {
        let name = entry.unwrap().file_name();
        let rel = Path::new("toy_mlp.cmodel/tensors").join(&name);
        assert_eq!(std::fs::read(shipped.join(&rel)).unwrap(), std::fs::read(out.join(&rel)).unwrap(), "{rel:?}");
    }
}

#[test]
fn calibration_from_env() {
    let dir = tempfile::tempdir().unwrap();
    let mut cal = cimpool::cost::Calibration::default();
    cal.config.e_dram_pj_per_bit *= 2.0;
    let path = dir.path().join("calib.json");
    std::fs::write(&path, cal.to_json()).unwrap();
    let run = |env: bool| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_cimpool"));
        cmd.args(["cost", "--manifest", &shipped_model(), "--scheme", "8bit", "--json"]).env_remove("CIMPOOL_CALIB");
        if env {
            cmd.env("CIMPOOL_CALIB", &path);
        }
        let v: serde_json::Value = serde_json::from_slice(&cmd.output().unwrap().stdout).unwrap();
        v["reports"][0]["dram_energy_uj"].as_f64().unwrap()
    };
    assert!((run(true) - 2.0 * run(false)).abs() < 1e-9);
}
