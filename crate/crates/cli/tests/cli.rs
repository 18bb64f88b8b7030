use std::path::PathBuf;
use std::process::{Command, Output};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_stratowave")).args(args).output().expect("binary runs")
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("stratowave-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir.join(name)
}

#[test]
fn census_table_is_printed() {
    let out = run(&["chaos", "--census", "6"]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert!(lines.next().unwrap().starts_with("#schema=1 command=chaos"));
    assert_eq!(lines.next().unwrap(), "n,k,chaos_level,term_count,label");
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    // one row per (n, k) for n = 1..=6
    assert_eq!(rows.len(), 1 + 2 + 2 + 3 + 3 + 4);
    let six: Vec<&str> = rows.iter().filter(|r| r[0] == "6").map(|r| r[3]).collect();
    assert_eq!(six, vec!["1", "15", "45", "15"]);
    assert!(rows.iter().all(|r| (r[1] == "0") == (r[4] == format!("J_{}", r[0]))));
}

#[test]
fn verify_quick_exits_zero() {
    let out = run(&["verify", "--quick", "--seed", "7"]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().nth(1).unwrap().starts_with("id,check,passed"));
    assert!(!text.contains(",false,"));
}

#[test]
fn bad_config_exits_two_with_line_number() {
    let path = scratch("bad.json");
    std::fs::write(&path, "{\n  \"t\": 1.0,\n  \"n_pathz\": 10\n}\n").unwrap();
    let out = run(&["fk", "--config", path.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 3"), "{err}");

    let out = run(&["fk", "--t", "-1"]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["noise", "--dim", "3"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_three() {
    // Unmollified Riesz noise has no pointwise realization.
    let out = run(&["fk", "--measure", "riesz:1.5", "--n-paths", "1000"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn config_file_and_output_round_trip() {
    let csv = scratch("fk.csv");
    let out = run(&["fk", "--seed", "3", "--n-paths", "4000", "--out", csv.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(out.stdout.is_empty());
    let table = std::fs::read_to_string(&csv).unwrap();
    let summary: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(format!("{}.summary.json", csv.display())).unwrap()).unwrap();
    assert_eq!(summary["command"], "fk");
    assert_eq!(summary["seed"], 3);
    let hash = summary["config_hash"].as_str().unwrap().to_string();
    assert!(table.lines().next().unwrap().contains(&hash));

    // Feeding the recorded config back reproduces the table exactly.
    let cfg = scratch("fk.json");
    let mut recorded = summary["config"].clone();
    recorded["out_path"] = serde_json::Value::Null;
    std::fs::write(&cfg, serde_json::to_string_pretty(&recorded).unwrap()).unwrap();
    let again = run(&["fk", "--config", cfg.to_str().unwrap()]);
    assert_eq!(again.status.code(), Some(0));
    assert_eq!(String::from_utf8(again.stdout).unwrap(), table);
}

#[test]
fn fk_rows_are_labelled() {
    let out = run(&["fk", "--n-paths", "2000", "--seed", "1"]);
    let text = String::from_utf8(out.stdout).unwrap();
    let names: Vec<&str> = text.lines().skip(2).map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(names, vec!["fk_realization", "fk_mean", "fk_second_moment"]);
}
