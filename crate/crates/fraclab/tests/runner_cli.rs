//! End-to-end exercises of the `fraclab` binary: exit codes, artifacts,
//! determinism and the heat-table cache.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use tempfile::tempdir;

fn fraclab(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fraclab"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const PASSING_CONFIG: &str = r#"{
    "graph": { "family": "interval", "level": 7 },
    "exponents": "interval",
    "conditions": ["volume", "harmonic"],
    "samples": 60,
    "seed": 7
}"#;

#[test]
fn verify_passes_and_is_deterministic() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), PASSING_CONFIG);
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        let res = fraclab(&["verify", "--config", &config, "--out", out.to_str().unwrap()]);
        assert_eq!(
            res.status.code(),
            Some(0),
            "stderr: {}",
            String::from_utf8_lossy(&res.stderr)
        );
        assert!(out.join("summary.json").is_file());
        assert!(out.join("graph.json").is_file());
        assert!(out.join("report-volume.json").is_file());
        assert!(out.join("report-harmonic.json").is_file());
        assert!(out.join("samples-harmonic.csv").is_file());
    }
    for name in ["summary.json", "report-volume.json", "report-harmonic.json"] {
        assert_eq!(
            fs::read(out_a.join(name)).unwrap(),
            fs::read(out_b.join(name)).unwrap(),
            "{name} differs between identical runs"
        );
    }
}

#[test]
fn verify_fails_with_mismatched_exponents() {
    // an interval graph checked against gasket exponents must fail volume
    let dir = tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{
            "graph": { "family": "interval", "level": 7 },
            "exponents": "gasket",
            "conditions": ["volume"],
            "seed": 7
        }"#,
    );
    let out = dir.path().join("out");
    let res = fraclab(&["verify", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn invalid_configs_exit_64() {
    let dir = tempdir().unwrap();
    let cases = [
        // unknown top-level key
        r#"{ "graph": { "family": "interval", "level": 3 }, "exponents": "interval",
             "conditions": ["volume"], "seed": 1, "bogus": true }"#,
        // unknown family
        r#"{ "graph": { "family": "menger", "level": 3 }, "exponents": "interval",
             "conditions": ["volume"], "seed": 1 }"#,
        // unknown condition
        r#"{ "graph": { "family": "interval", "level": 3 }, "exponents": "interval",
             "conditions": ["entropy"], "seed": 1 }"#,
        // unknown preset
        r#"{ "graph": { "family": "interval", "level": 3 }, "exponents": "koch",
             "conditions": ["volume"], "seed": 1 }"#,
        // missing seed
        r#"{ "graph": { "family": "interval", "level": 3 }, "exponents": "interval",
             "conditions": ["volume"] }"#,
    ];
    for (i, body) in cases.iter().enumerate() {
        let path = dir.path().join(format!("bad-{i}.json"));
        fs::write(&path, body).unwrap();
        let res = fraclab(&["verify", "--config", path.to_str().unwrap()]);
        assert_eq!(res.status.code(), Some(64), "case {i}");
    }
    // missing --config entirely
    let res = fraclab(&["verify"]);
    assert_eq!(res.status.code(), Some(64));
}

#[test]
fn report_on_empty_dir_exits_1() {
    let dir = tempdir().unwrap();
    let res = fraclab(&["report", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(1));
}

#[test]
fn report_consolidates_and_never_recomputes() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), PASSING_CONFIG);
    let out = dir.path().join("out");
    let res = fraclab(&["verify", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));

    let before: Vec<_> = fs::read_dir(&out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .collect();
    let rep = fraclab(&["report", out.to_str().unwrap()]);
    assert_eq!(rep.status.code(), Some(0));
    let text = String::from_utf8(rep.stdout).unwrap();
    assert!(text.contains("volume"), "table mentions each condition: {text}");
    assert!(text.contains("harmonic"));
    assert!(out.join("report.csv").is_file());
    // the consolidator adds report.csv but touches no report artifacts
    for path in before {
        assert!(path.exists(), "{path:?} removed by report");
    }
    let rep2 = fraclab(&["report", out.to_str().unwrap()]);
    assert_eq!(rep2.stdout, text.as_bytes(), "report table not deterministic");
}

#[test]
fn build_writes_graph_json() {
    let dir = tempdir().unwrap();
    let config = write_config(dir.path(), PASSING_CONFIG);
    let out = dir.path().join("out");
    let res = fraclab(&["build", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(0));
    let doc: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("graph.json")).unwrap()).unwrap();
    assert_eq!(doc["vertices"].as_array().unwrap().len(), 129);
}

#[test]
fn heat_table_cache_hits_on_second_run() {
    let dir = tempdir().unwrap();
    let config = write_config(
        dir.path(),
        r#"{
            "graph": { "family": "interval", "level": 5 },
            "exponents": "interval",
            "conditions": ["heat"],
            "seed": 7
        }"#,
    );
    let out = dir.path().join("out");
    let first = fraclab(&["heat", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(first.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&first.stderr).contains("computed"));
    let second = fraclab(&["heat", "--config", &config, "--out", out.to_str().unwrap()]);
    assert_eq!(second.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&second.stderr).contains("cache hit"));
    let third = fraclab(&[
        "heat",
        "--config",
        &config,
        "--out",
        out.to_str().unwrap(),
        "--cache",
        "false",
    ]);
    assert_eq!(third.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&third.stderr).contains("computed"));
}
