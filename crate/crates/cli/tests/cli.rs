use std::path::Path;
use std::process::{Command, Output};

use posmap_core::{PositivityReport, SeparabilityReport};
use serde_json::{json, Value};
use tempfile::TempDir;

fn posmap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_posmap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write(dir: &TempDir, name: &str, body: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn stdout_json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).expect("stdout is JSON")
}

fn first_example() -> Value {
    json!({
        "p": 2, "q": 2,
        "form": {"kind": "gram", "matrix": [
            [0.0058, -0.1894, -0.2736, 0.3415],
            [-0.1894, -0.1859, -0.1585, 0.0841],
            [-0.2736, -0.1585, -0.0693, -0.0669],
            [0.3415, 0.0841, -0.0669, 0.2494]
        ]}
    })
}

fn not_separable_2x2() -> Value {
    json!({
        "p": 2, "q": 2,
        "matrix": [
            [0.4691, 0.1203, -0.1203, 0.4691],
            [0.1203, 0.0309, -0.0309, 0.1203],
            [-0.1203, -0.0309, 0.0309, -0.1203],
            [0.4691, 0.1203, -0.1203, 0.4691]
        ]
    })
}

#[test]
fn negative_form_exits_one_with_minimum() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "first.json", &first_example().to_string());
    let out = posmap(&["positivity", &path]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["status"], "NotPositive");
    let b_min = v["b_min"].as_f64().unwrap();
    assert!((b_min + 0.3157).abs() < 1e-3, "{b_min}");
}

#[test]
fn product_of_norms_exits_zero() {
    let dir = TempDir::new().unwrap();
    let identity: Vec<Vec<f64>> = (0..4)
        .map(|i| (0..4).map(|j| if i == j { 1.0 } else { 0.0 }).collect())
        .collect();
    let body = json!({"p": 2, "q": 2, "form": {"kind": "gram", "matrix": identity}});
    let path = write(&dir, "id.json", &body.to_string());
    let out = posmap(&["positivity", &path]);
    assert_eq!(out.status.code(), Some(0));
    let v = stdout_json(&out);
    assert!((v["b_min"].as_f64().unwrap() - 1.0).abs() < 1e-6);
}

#[test]
fn malformed_inputs_exit_64() {
    let dir = TempDir::new().unwrap();
    let garbage = write(&dir, "garbage.json", "not json at all");
    let truncated = write(&dir, "truncated.json", &first_example().to_string()[..40]);
    let wrong_shape = write(
        &dir,
        "shape.json",
        r#"{"p":2,"q":2,"form":{"kind":"gram","matrix":[[1,0],[0,1]]}}"#,
    );
    let bad_kind = write(
        &dir,
        "kind.json",
        r#"{"p":2,"q":2,"form":{"kind":"cubic","values":[]}}"#,
    );
    for path in [&garbage, &truncated, &wrong_shape, &bad_kind] {
        let out = posmap(&["positivity", path]);
        assert_eq!(out.status.code(), Some(64), "{path}");
        assert!(!out.stderr.is_empty());
        assert!(out.stdout.is_empty());
    }
    let missing = dir.path().join("missing.json");
    assert_eq!(
        posmap(&["separability", missing.to_str().unwrap()]).status.code(),
        Some(64)
    );
}

#[test]
fn text_format_mirrors_fields() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "first.json", &first_example().to_string());
    let out = posmap(&["positivity", &path, "--format", "text"]);
    assert_eq!(out.status.code(), Some(1));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("status: NotPositive"));
    assert!(text.contains("b_min: -0.3156"));
    assert!(text.contains("moment_rank: 1"));
}

#[test]
fn report_round_trips_and_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "first.json", &first_example().to_string());
    let a = posmap(&["positivity", &path, "--seed", "5"]);
    let b = posmap(&["positivity", &path, "--seed", "5"]);
    assert_eq!(a.stdout, b.stdout);
    let v = stdout_json(&a);
    let report: PositivityReport = serde_json::from_value(v.clone()).unwrap();
    assert_eq!(serde_json::to_value(&report).unwrap(), v);

    let sep = write(&dir, "sep.json", &not_separable_2x2().to_string());
    let s = posmap(&["separability", &sep, "--omega-entries"]);
    let v = stdout_json(&s);
    let report: SeparabilityReport = serde_json::from_value(v.clone()).unwrap();
    assert_eq!(serde_json::to_value(&report).unwrap(), v);
}

#[test]
fn numbers_carry_twelve_significant_digits() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "first.json", &first_example().to_string());
    let out = posmap(&["positivity", &path]);
    let v = stdout_json(&out);
    let text = v["b_min"].to_string();
    let digits = text
        .trim_start_matches('-')
        .replace('.', "")
        .trim_start_matches('0')
        .len();
    assert!(digits <= 12, "{text}");
}

#[test]
fn dump_sdp_writes_triplets() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "first.json", &first_example().to_string());
    let dump = dir.path().join("relaxation.txt");
    let out = posmap(&["positivity", &path, "--dump-sdp", dump.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let text = std::fs::read_to_string(&dump).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("# posmap-sdp v1"));
    assert!(lines.next().unwrap().starts_with("vars "));
    assert!(text.lines().any(|l| l.starts_with("block 0 psd ")));
}

#[test]
fn partial_symmetry_violation_needs_flag() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "sep.json", &not_separable_2x2().to_string());
    assert_eq!(posmap(&["separability", &path]).status.code(), Some(64));
    let out = posmap(&["separability", &path, "--omega-entries"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    assert_eq!(v["status"], "NotSeparable");
    assert_eq!(v["infeasibility_ray"]["check"]["passes"], true);
}

#[test]
fn planted_atom_is_recovered() {
    let dir = TempDir::new().unwrap();
    let body = json!({"p": 2, "q": 3, "atoms": [{"a": [0.6, 0.8], "b": [0.0, 0.6, 0.8]}]});
    let path = write(&dir, "atom.json", &body.to_string());
    let out = posmap(&["separability", &path]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let v = stdout_json(&out);
    let atoms = v["atoms"].as_array().unwrap();
    assert_eq!(atoms.len(), 1);
    let a: Vec<f64> = serde_json::from_value(atoms[0]["a"].clone()).unwrap();
    let b: Vec<f64> = serde_json::from_value(atoms[0]["b"].clone()).unwrap();
    for (x, y) in a.iter().zip([0.6, 0.8]) {
        assert!((x - y).abs() < 1e-5);
    }
    for (x, y) in b.iter().zip([0.0, 0.6, 0.8]) {
        assert!((x - y).abs() < 1e-5);
    }
}

#[test]
fn index_sum_pattern_is_not_separable() {
    let dir = TempDir::new().unwrap();
    let matrix: Vec<Vec<f64>> = (0..16)
        .map(|r| (0..16).map(|c| (r / 4 + r % 4 + c / 4 + c % 4 + 4) as f64).collect())
        .collect();
    let body = json!({"p": 4, "q": 4, "matrix": matrix});
    let path = write(&dir, "sum.json", &body.to_string());
    let out = posmap(&["separability", &path, "--max-order", "3"]);
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(stdout_json(&out)["order_used"], 3);
}

#[test]
fn invalid_flags_are_rejected() {
    let dir = TempDir::new().unwrap();
    let path = write(&dir, "first.json", &first_example().to_string());
    assert_eq!(
        posmap(&["positivity", &path, "--max-order", "2"]).status.code(),
        Some(64)
    );
    assert_eq!(
        posmap(&["positivity", &path, "--rank-tol", "-1"]).status.code(),
        Some(64)
    );
    assert!(Path::new(env!("CARGO_BIN_EXE_posmap")).exists());
}
