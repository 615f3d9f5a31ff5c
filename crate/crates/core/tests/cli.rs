use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use ising_moments::model::{l1_width, IsingModel};
use ising_moments::pipeline::{RunManifest, RunSummary};
use sha2::{Digest, Sha256};

fn cli(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ising-moments"))
        .current_dir(dir)
        .args(args)
        .output()
        .unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> Output {
    let out = cli(dir, args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn ring(dir: &Path) {
    ok(dir, &["gen-model", "--p", "8", "--topology", "ring", "--gamma", "0.9", "--alpha", "0.4", "--seed", "3", "--out", "m.json"]);
}

#[test]
fn gen_model_examples() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ring(d);
    let m = IsingModel::from_json(&fs::read_to_string(d.join("m.json")).unwrap()).unwrap();
    assert!((l1_width(&m) - 0.9).abs() < 1e-12);
    assert_eq!(m.couplings().count(), 8);
    assert!(m.couplings().all(|(_, _, x)| x.abs() >= 0.4));
    let first = fs::read(d.join("m.json")).unwrap();
    ring(d);
    assert_eq!(first, fs::read(d.join("m.json")).unwrap());

    let out = cli(d, &["gen-model", "--p", "8", "--topology", "ring", "--gamma", "0.5", "--alpha", "1", "--out", "x.json"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(!d.join("x.json").exists());
}

#[test]
fn chained_commands_are_deterministic_and_hashed() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ring(d);
    ok(d, &["sample", "--model", "m.json", "--n", "20000", "--seed", "5", "--out", "s.csv"]);
    ok(d, &["moments", "--data", "s.csv", "--degree", "8", "--out", "t.json"]);
    for out in ["e1.json", "e2.json"] {
        ok(d, &["learn", "--moments", "t.json", "--gamma", "0.9", "--d", "8", "--T", "500", "--eta", "1", "--out", out]);
    }
    assert_eq!(fs::read(d.join("e1.json")).unwrap(), fs::read(d.join("e2.json")).unwrap());
    ok(d, &["structure", "--estimate", "e1.json", "--alpha", "0.4", "--truth", "m.json", "--out", "g.json"]);
    ok(d, &["fields", "--estimate", "e1.json", "--edges", "g.json", "--moments", "t.json", "--d", "8", "--T", "500", "--eta", "1", "--out", "f.json"]);
    ok(d, &["known", "--moments", "t.json", "--edges", "g.json", "--gamma", "0.9", "--T", "500", "--eta", "1", "--out", "k.json"]);

    let manifest: RunManifest = serde_json::from_str(&fs::read_to_string(d.join("e1.manifest.json")).unwrap()).unwrap();
    let digest = format!("{:x}", Sha256::digest(fs::read(d.join("t.json")).unwrap()));
    let text = serde_json::to_string(&manifest).unwrap();
    assert!(text.contains(&digest), "manifest lacks the input hash");
    assert!(manifest.schedule.is_some());
    for f in ["m", "s", "t", "g", "f", "k"] {
        assert!(d.join(format!("{f}.manifest.json")).exists(), "{f}");
    }
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ring(d);
    ok(d, &["sample", "--model", "m.json", "--n", "1000", "--seed", "1", "--out", "s.csv"]);
    ok(d, &["moments", "--data", "s.csv", "--degree", "2", "--out", "t2.json"]);
    let out = cli(d, &["learn", "--moments", "t2.json", "--gamma", "0.9", "--d", "4", "--out", "e.json"]);
    assert_eq!(out.status.code(), Some(3));

    fs::write(d.join("bad.json"), "{\"p\": 2, \"couplings\": [[1, 0, 0.5]], \"fields\": [0, 0]}").unwrap();
    let out = cli(d, &["sample", "--model", "bad.json", "--n", "10", "--out", "z.csv"]);
    assert_eq!(out.status.code(), Some(2));

    let out = cli(d, &["learn", "--moments", "t2.json", "--gamma", "0.9", "--mode", "theory", "--epsilon", "0.1", "--delta", "0.05", "--out", "e.json"]);
    assert_eq!(out.status.code(), Some(5));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("T = ") && err.contains("n = "), "{err}");
    assert!(!d.join("e.json").exists());

    let help = ok(d, &["--help"]);
    let text = String::from_utf8_lossy(&help.stdout);
    for code in ["2 ", "3 ", "4 ", "5 "] {
        assert!(text.contains(&format!("  {code}")), "help lacks exit code {code}");
    }
}

#[test]
fn verify_suite_emits_reports() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let out = ok(d, &["verify", "--suite", "poisson_tail", "--out", "v.json"]);
    assert!(String::from_utf8_lossy(&out.stdout).contains("poisson_tail"));
    let reports: serde_json::Value = serde_json::from_str(&fs::read_to_string(d.join("v.json")).unwrap()).unwrap();
    assert!(reports.as_array().is_some_and(|a| !a.is_empty()));
}

#[test]
fn pipeline_recovers_ring() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let config = r#"{
        "model": {"generate": {"p": 8, "topology": "ring", "gamma": 0.9, "alpha": 0.4, "seed": 11,
                               "coupling": 0.4, "field": 0.1}},
        "sampler": {"method": "exact", "n": 1000000, "seed": 12},
        "stages": ["couplings", "structure", "fields"],
        "alpha": 0.4,
        "overrides": {"d": 10, "T": 5000, "eta": 1.0},
        "field_overrides": {"d": 10, "T": 5000, "eta": 1.0},
        "output_dir": "run"
    }"#;
    fs::write(d.join("config.json"), config).unwrap();
    ok(d, &["pipeline", "--config", "config.json"]);
    let summary: RunSummary = serde_json::from_str(&fs::read_to_string(d.join("run/summary.json")).unwrap()).unwrap();
    assert_eq!(summary.structure_exact, Some(true));
    assert!(summary.max_coupling_error.unwrap() <= 0.05);
    assert!(summary.max_field_error.unwrap() <= 0.05);
    assert!(d.join("run/manifest.json").exists());
}
