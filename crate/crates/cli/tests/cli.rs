use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_maxdiff")).args(args).output().unwrap()
}

fn toy_csv(dir: &Path) -> String {
    let mut text = String::from("group,x1,x2,x3\n");
    for i in 0..30 {
        let g = if i < 12 { "a" } else { "b" };
        let t = i as f64;
        text += &format!("{g},{},{},{}\n", (t * 1.7).sin(), (t * 0.9).cos(), (t * 2.3).sin() * 0.5);
    }
    let path = dir.join("toy.csv");
    fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn test_outputs_json_array_for_both_methods() {
    let dir = tempfile::tempdir().unwrap();
    let input = toy_csv(dir.path());
    let out = run(&["test", "--input", &input, "--mc-outer", "10", "--mc-inner", "50"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let reports = value.as_array().unwrap();
    assert_eq!(reports.len(), 2);
    assert_eq!(reports[0]["method"], "mod");
    assert_eq!(reports[1]["method"], "camod");
}

#[test]
fn test_outputs_csv() {
    let dir = tempfile::tempdir().unwrap();
    let input = toy_csv(dir.path());
    let out = run(&["test", "--input", &input, "--mode", "camod", "--output", "csv"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("method,statistic,"));
    assert!(lines.next().unwrap().starts_with("camod,"));
    assert!(lines.next().is_none());
}

#[test]
fn input_errors_exit_with_code_two() {
    let out = run(&["test", "--input", "/nonexistent/data.csv"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bad.csv");
    fs::write(&path, "group,x1\na,1\na,oops\nb,2\nb,3\n").unwrap();
    let out = run(&["test", "--input", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("x1"));

    let out = run(&["simulate", "--setting", "IA", "--case", "null", "--n", "60", "--p", "5", "--signal", "1"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn simulate_csv_has_one_row_per_method() {
    let out = run(&[
        "simulate", "--setting", "IA", "--case", "1", "--n", "45", "--p", "10", "--reps", "3",
        "--output", "csv", "--mc-outer", "10", "--mc-inner", "50",
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(!lines[0].contains("wall_time"));
}

#[test]
fn scan_reports_selected_quantile() {
    let dir = tempfile::tempdir().unwrap();
    let input = toy_csv(dir.path());
    let out = run(&["scan", "--input", &input, "--grid", "0.25,0.5,0.75"]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let value: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(value["candidates"].as_array().unwrap().len(), 3);
    assert!(value["selected_quantile"].is_number());
}
