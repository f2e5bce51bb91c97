use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use fracshape::{parse_config, Command as Cmd};

const BIN: &str = env!("CARGO_BIN_EXE_fracshape");

fn run(dir: &Path, command: &str, config: &str, extra: &[&str]) -> (Output, PathBuf) {
    let cfg = dir.join(format!("{command}.json"));
    fs::write(&cfg, config).unwrap();
    let out = dir.join(format!("out-{command}"));
    let output = Command::new(BIN)
        .arg(command)
        .arg("--config")
        .arg(&cfg)
        .arg("--out")
        .arg(&out)
        .args(extra)
        .env_remove("FRACSHAPE_THREADS")
        .output()
        .unwrap();
    (output, out)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

const TORSION: &str = r#"{"grid": {"dim": 1, "nodes_per_axis": 16}, "params": {"s": 0.5, "p": 2.0}}"#;

#[test]
fn torsion_writes_outputs_and_echo_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let (o, out) = run(dir.path(), "torsion", TORSION, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for f in ["summary.json", "field.csv", "mask.json"] {
        assert!(out.join(f).exists(), "{f}");
    }
    let summary: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["converged"], true);
    assert_eq!(summary["config"]["grid"]["padding_cells"], 2);
    let echoed = serde_json::to_string(&summary["config"]).unwrap();
    let mut back = parse_config(&echoed).unwrap();
    let before = back.clone();
    back.normalize(Cmd::Torsion).unwrap();
    assert_eq!(back, before);
    let csv = fs::read_to_string(out.join("field.csv")).unwrap();
    assert_eq!(csv.lines().next(), Some("node_index,x,value"));
    assert_eq!(csv.lines().count(), 17);
}

#[test]
fn typo_key_exits_2_naming_key() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"grid": {"dim": 1, "nodes_per_axis": 16, "pading_cells": 1}, "params": {"s": 0.5, "p": 2.0}}"#;
    let (o, _) = run(dir.path(), "torsion", cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
    let err = stderr(&o);
    assert!(err.starts_with("ERROR 2:") && err.contains("pading_cells"), "{err}");
    assert_eq!(err.lines().count(), 1);
}

#[test]
fn malformed_json_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = run(dir.path(), "eigen", "{\"grid\": ", &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn empty_mask_torsion_succeeds() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"grid": {"dim": 1, "nodes_per_axis": 8}, "params": {"s": 0.5, "p": 2.0}, "mask": "empty"}"#;
    let (o, out) = run(dir.path(), "torsion", cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s = fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(s.contains("degenerate zero field"));
}

#[test]
fn optimize_guard_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"grid": {"dim": 2, "nodes_per_axis": 6}, "params": {"s": 0.5, "p": 2.0}, "c": 0.25}"#;
    let (o, _) = run(dir.path(), "optimize", cfg, &[]);
    assert_eq!(o.status.code(), Some(4));
    assert!(stderr(&o).starts_with("ERROR 4:"));
}

#[test]
fn optimize_writes_mask_and_history() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"grid": {"dim": 1, "nodes_per_axis": 10}, "params": {"s": 0.5, "p": 2.0}, "c": 0.4, "functional": "torsional_compliance"}"#;
    let (o, out) = run(dir.path(), "optimize", cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let hist = fs::read_to_string(out.join("history.csv")).unwrap();
    assert_eq!(hist.lines().next(), Some("iter,cost,volume"));
    let mask: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("mask.json")).unwrap()).unwrap();
    let ones = mask["cells"].as_array().unwrap().iter().filter(|v| v.as_u64() == Some(1)).count();
    assert_eq!(ones, 4);
}

#[test]
fn rearrange_from_mask_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("init.json"), "[1,0,1,0,1,0,1,0,0,0,0,0]").unwrap();
    let cfg = r#"{"grid": {"dim": 1, "nodes_per_axis": 12}, "params": {"s": 0.5, "p": 2.0}, "c": 0.34,
        "method": "rearrange", "init_mask": {"file": "init.json"}}"#;
    let (o, out) = run(dir.path(), "optimize", cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let s: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(s["results"]["method"], "rearrange");
    assert_eq!(s["results"]["cells"].as_array().unwrap().len(), 4);
}

#[test]
fn sweep_has_one_row_per_s() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"grid": {"dim": 1, "nodes_per_axis": 64}, "params": {"p": 2.0}, "s_list": [0.5, 0.7, 0.9, 0.99]}"#;
    let (o, out) = run(dir.path(), "sweep-s", cfg, &[]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 5);
    assert!(out.join("sweep.json").exists());
}

#[test]
fn s_equal_one_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"grid": {"dim": 1, "nodes_per_axis": 16}, "params": {"p": 2.0}, "s_list": [0.5, 1.0]}"#;
    let (o, _) = run(dir.path(), "sweep-s", cfg, &[]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn non_convergence_exits_3_with_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = r#"{"grid": {"dim": 1, "nodes_per_axis": 32}, "params": {"s": 0.5, "p": 3.0}, "solver": {"max_iter": 2}}"#;
    let (o, out) = run(dir.path(), "torsion", cfg, &[]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).starts_with("ERROR 3:"));
    let s = fs::read_to_string(out.join("summary.json")).unwrap();
    assert!(s.contains("\"converged\": false"));
}

#[test]
fn bad_command_and_threads() {
    let dir = tempfile::tempdir().unwrap();
    let (o, _) = run(dir.path(), "frobnicate", TORSION, &[]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).starts_with("ERROR 2:"));
    let (o, _) = run(dir.path(), "torsion", TORSION, &["--threads", "0"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn other_commands_run() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("eigen", r#"{"grid": {"dim": 1, "nodes_per_axis": 12}, "params": {"s": 0.5, "p": 3.0}, "mask": "disk(0.3)"}"#),
        ("bbm", r#"{"grid": {"dim": 1, "nodes_per_axis": 64}, "params": {"p": 2.0}, "s_list": [0.9, 0.99]}"#),
        ("aniso-check", r#"{"grid": {"dim": 2, "nodes_per_axis": 4}, "params": {"s_vec": [0.5, 0.5], "p_vec": [2.0, 2.0]}}"#),
        ("gamma-dist", r#"{"grid": {"dim": 1, "nodes_per_axis": 10}, "params": {"s": 0.5, "p": 2.0}, "mask": "left-half", "mask_b": "all"}"#),
    ];
    for (cmd, cfg) in cases {
        let (o, out) = run(dir.path(), cmd, cfg, &[]);
        assert_eq!(o.status.code(), Some(0), "{cmd}: {}", stderr(&o));
        assert!(out.join("summary.json").exists());
    }
}

#[test]
fn threads_env_fallback_gives_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.json");
    fs::write(&cfg, r#"{"grid": {"dim": 2, "nodes_per_axis": 6}, "params": {"s": 0.4, "p": 2.5}}"#).unwrap();
    let mut outputs = Vec::new();
    for (i, t) in ["1", "3"].iter().enumerate() {
        let out = dir.path().join(format!("o{i}"));
        let st = Command::new(BIN)
            .args(["torsion", "--config"])
            .arg(&cfg)
            .arg("--out")
            .arg(&out)
            .env("FRACSHAPE_THREADS", t)
            .status()
            .unwrap();
        assert!(st.success());
        outputs.push(fs::read(out.join("field.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
}
