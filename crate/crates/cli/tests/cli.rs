use std::path::Path;
use std::process::Command;

use kinex_cli::run::run;
use kinex_cli::scenario::{parse_scenario_str, Experiment};
use kinex_cli::CliError;
use kinex_core::fluid::BoundaryCondition;

fn kinex() -> Command {
    Command::new(env!("CARGO_BIN_EXE_kinex"))
}

fn with_output(json: &str, dir: &Path) -> String {
    let mut v: serde_json::Value = serde_json::from_str(json).unwrap();
    v["output_dir"] = serde_json::Value::String(dir.to_string_lossy().into_owned());
    v.to_string()
}

#[test]
fn minimal_config_gets_defaults() {
    let scn = parse_scenario_str(r#"{"experiment": "euler_1d"}"#).unwrap();
    assert_eq!(scn.experiment, Experiment::Euler1d);
    assert_eq!(scn.cfl, 0.45);
    assert_eq!(scn.grid.bc, BoundaryCondition::Periodic);
    let echo = serde_json::to_value(&scn).unwrap();
    assert_eq!(echo["cfl"], 0.45);
    assert_eq!(echo["grid"]["bc"], "periodic");
}

#[test]
fn unknown_key_is_named() {
    let err = parse_scenario_str("{\n  \"experiment\": \"qeval\",\n  \"velocity\": {\"vmax_\": 4.0}\n}").unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, CliError::Parse(_)));
    assert!(msg.contains("vmax_") && msg.contains("velocity") && msg.contains("line 3"), "{msg}");
}

#[test]
fn table_length_must_match() {
    let err = parse_scenario_str(r#"{"experiment": "qeval", "law": {"M_max": 3, "table": [1.0, 2.0]}}"#).unwrap_err();
    assert!(matches!(err, CliError::Validation(_)));
    assert!(err.to_string().contains("M_max = 3"));
    let err = parse_scenario_str(r#"{"experiment": "qeval", "law": {"M_max": 2, "table": [1.0, 0.0]}}"#).unwrap_err();
    assert!(matches!(err, CliError::Validation(_)));
}

fn read_csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    v.sort();
    v
}

#[test]
fn same_seed_gives_identical_csvs() {
    let tmp = tempfile::tempdir().unwrap();
    let configs = [
        r#"{"experiment": "relax_dsmc", "n": 3, "law": {"M_max": 3, "family": {}}, "ensemble": {"particles": 2000, "shards": 2}, "t_end": 0.3, "seed": 9}"#,
        r#"{"experiment": "qeval", "velocity": {"n_v": 8, "v_max": 4.0, "n_omega": 6}, "seed": 4}"#,
        r#"{"experiment": "nsme_1d", "grid": {"cells": 32}, "eps": 0.05, "t_end": 0.05}"#,
    ];
    for (k, cfg) in configs.iter().enumerate() {
        let a = tmp.path().join(format!("a{k}"));
        let b = tmp.path().join(format!("b{k}"));
        run(&parse_scenario_str(&with_output(cfg, &a)).unwrap(), 1).unwrap();
        run(&parse_scenario_str(&with_output(cfg, &b)).unwrap(), 1).unwrap();
        let (ca, cb) = (read_csvs(&a), read_csvs(&b));
        assert!(!ca.is_empty());
        assert_eq!(ca, cb, "config {k}");
        assert!(a.join("manifest.json").exists());
    }
}

#[test]
fn relax_bgk_entropy_is_monotone() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = r#"{"experiment": "relax_bgk", "n": 1, "law": {"M_max": 3, "family": {"a": 1.0}}, "velocity": {"n_v": 24}, "eps": 0.2, "dt": 0.05, "t_end": 2.0}"#;
    let summary = run(&parse_scenario_str(&with_output(cfg, tmp.path())).unwrap(), 1).unwrap();
    assert_eq!(summary["entropy_monotone"], true);
    let mut rd = csv::Reader::from_path(tmp.path().join("relax_bgk.csv")).unwrap();
    let s: Vec<f64> = rd.records().map(|r| r.unwrap()[2].parse().unwrap()).collect();
    assert_eq!(s.len(), 41);
    assert!(s.windows(2).all(|w| w[1] <= w[0]));
}

#[test]
fn thermo_verify_passes_on_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let summary = run(&parse_scenario_str(&with_output(r#"{"experiment": "thermo_verify"}"#, tmp.path())).unwrap(), 1).unwrap();
    assert_eq!(summary["all_passed"], true);
    let report: kinex_core::verify::Report = serde_json::from_slice(&std::fs::read(tmp.path().join("thermo_report.json")).unwrap()).unwrap();
    assert!(report.all_passed());
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(kinex().arg("frobnicate").status().unwrap().code(), Some(1));
    assert_eq!(kinex().args(["run", "/nonexistent/config.json"]).status().unwrap().code(), Some(1));

    let bad = tmp.path().join("bad.json");
    std::fs::write(&bad, r#"{"experiment": "euler_1d", "cfl": 3.0}"#).unwrap();
    assert_eq!(kinex().arg("run").arg(&bad).status().unwrap().code(), Some(1));

    let out = tmp.path().join("guard");
    let cfg = tmp.path().join("guard.json");
    let text = r#"{"experiment": "relax_dsmc", "ensemble": {"particles": 500}, "dt": 10.0, "t_end": 10.0}"#;
    std::fs::write(&cfg, with_output(text, &out)).unwrap();
    assert_eq!(kinex().arg("run").arg(&cfg).status().unwrap().code(), Some(2));
    let diag: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("diagnostic.json")).unwrap()).unwrap();
    assert_eq!(diag["stage"], "collision round");

    let o = kinex().args(["verify", "collision"]).env("KINEX_THREADS", "2").output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let report: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(report["suite"], "collision");

    let o = kinex().args(["demo", "collide", "--m", "1", "--m1", "3", "--m-out", "2"]).output().unwrap();
    assert_eq!(o.status.code(), Some(0));
    let demo: serde_json::Value = serde_json::from_slice(&o.stdout).unwrap();
    assert_eq!(demo["outgoing"][0]["m"], 2);
    assert!(demo["energy_error"].as_f64().unwrap() < 1e-12);

    let o = kinex().args(["demo", "collide", "--m", "1", "--m1", "3", "--m-out", "2", "--omega", "1,0,0"]).output().unwrap();
    assert_eq!(o.status.code(), Some(1));
    assert_eq!(kinex().args(["verify", "thermo"]).env("KINEX_THREADS", "zero").status().unwrap().code(), Some(1));
}
