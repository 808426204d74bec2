use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn lieval(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lieval")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let p = dir.join("cfg.json");
    fs::write(&p, body).unwrap();
    p.display().to_string()
}

const SMALL: &str = r#"{
  "dataset": {"source": "synthetic", "train": 8, "test": 2, "side": 16, "seed": 1},
  "cells": [
    {"scheme": {"kind": "pixelwise", "policy": "different"}, "attack": {"kind": "fr"}},
    {"scheme": {"kind": "pixelwise", "policy": "same"}, "attack": {"kind": "itn", "solver": "closed", "self_test": true}}
  ]
}"#;

#[test]
fn keyspace_command() {
    let out = lieval(&["keyspace", "--scheme", "pixelwise", "--n", "1"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["exact"], "48");
    assert_eq!(v["crossover_smallest_n"], 107);
    let missing = lieval(&["keyspace", "--scheme", "pixelwise"]);
    assert_eq!(missing.status.code(), Some(1));
}

#[test]
fn staged_run_writes_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("out").display().to_string();
    for cmd in ["encrypt", "attack", "evaluate"] {
        let o = lieval(&[cmd, "--config", &cfg, "--out", &out]);
        assert!(o.status.success(), "{cmd}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let root = dir.path().join("out");
    for f in [
        "report.json",
        "metrics.csv",
        "cells/pixelwise-different-fr/keys.json",
        "cells/pixelwise-same-itn/model.lien",
        "cells/pixelwise-same-itn/reconstructed/itn/000008.ppm",
    ] {
        assert!(root.join(f).exists(), "{f}");
    }
    let first = fs::read(root.join("cells/pixelwise-different-fr/encrypted/test/000009.ppm")).unwrap();
    assert!(lieval(&["encrypt", "--config", &cfg, "--out", &out]).status.success());
    assert_eq!(first, fs::read(root.join("cells/pixelwise-different-fr/encrypted/test/000009.ppm")).unwrap());
}

#[test]
fn report_honours_overrides_and_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let body = SMALL.replacen('{', r#"{"output_dir": "results","#, 1);
    let cfg = write_config(dir.path(), &body);
    let o = lieval(&["report", "--config", &cfg, "--seed-override", "seeds.cipher=42"]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rep: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("results/report.json")).unwrap()).unwrap();
    assert_eq!(rep["config"]["seeds"]["cipher"], 42);
    assert!(dir.path().join("results/timing.json").exists());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "{\"dataset\": }");
    let o = lieval(&["report", "--config", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));

    let cfg = write_config(dir.path(), SMALL);
    let out = dir.path().join("fresh").display().to_string();
    assert_eq!(lieval(&["attack", "--config", &cfg, "--out", &out]).status.code(), Some(2));

    let diverging = SMALL.replace(
        r#""solver": "closed""#,
        r#""solver": "sgd", "sgd": {"layers": 1, "init": {"kind": "identity"}, "epochs": 5, "batch": 64, "seed": 0,
            "optimizer": {"kind": "sgd", "lr": 1e9, "momentum": 0.9, "weight_decay": 0.0, "schedule": []}}"#,
    );
    let cfg = write_config(dir.path(), &diverging);
    let o = lieval(&["report", "--config", &cfg, "--out", &out]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}
