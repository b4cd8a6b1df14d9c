use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn carleson(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_carleson"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("binary runs")
}

fn csv_rows(text: &str) -> Vec<csv::StringRecord> {
    csv::ReaderBuilder::new()
        .comment(Some(b'#'))
        .from_reader(text.as_bytes())
        .records()
        .map(|r| r.unwrap())
        .collect()
}

#[test]
fn tree_test_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = carleson(&["tree-test", "--depth", "6", "--trials", "100", "--seed", "7"], dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.starts_with("# carleson report version 1\n"));
    let rows = csv_rows(&text);
    assert_eq!(rows.len(), 100);
    for row in rows {
        let test: f64 = row[3].parse().unwrap();
        let emb: f64 = row[4].parse().unwrap();
        assert!(test <= emb * (1.0 + 1e-9) && emb <= 4.0 * test * (1.0 + 1e-9));
        assert_eq!(&row[8], "true");
    }
}

#[test]
fn bellman_sample_summary() {
    let dir = tempfile::tempdir().unwrap();
    let out = carleson(
        &["bellman-sample", "--mode", "mi18", "--trials", "100000", "--seed", "1", "--format", "json"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["version"], 1);
    assert_eq!(report["summary"]["samples"], 100000);
    assert!(report["summary"]["extreme"].as_f64().unwrap() >= -1e-9);
}

#[test]
fn empty_gap_probe() {
    let dir = tempfile::tempdir().unwrap();
    let out = carleson(&["gap-probe", "--depths", "4,4", "--trials", "0", "--format", "json"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["rows"].as_array().unwrap().len(), 0);
    assert!(report["summary"]["best_measure"].is_null());
}

#[test]
fn reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let runs: [&[&str]; 4] = [
        &["tree-test", "--trials", "40", "--seed", "3"],
        &["gap-probe", "--depths", "2,2", "--trials", "100", "--seed", "9", "--format", "json"],
        &["bitree-certify", "--depths", "2,3", "--trials", "8", "--seed", "4"],
        &["maximal-verify", "--trials", "20", "--seed", "5", "--format", "json"],
    ];
    for (i, args) in runs.iter().enumerate() {
        let mut bytes = Vec::new();
        for copy in 0..2 {
            let path = dir.path().join(format!("run{i}-{copy}.out"));
            let mut full = args.to_vec();
            full.extend(["--out", path.to_str().unwrap()]);
            let out = carleson(&full, dir.path());
            assert_eq!(out.status.code(), Some(0), "{args:?}");
            bytes.push(std::fs::read(&path).unwrap());
        }
        assert!(!bytes[0].is_empty());
        assert_eq!(bytes[0], bytes[1], "{args:?}");
    }
}

#[test]
fn measure_files() {
    let dir = tempfile::tempdir().unwrap();
    let tree = dir.path().join("tree.json");
    std::fs::write(
        &tree,
        r#"{"kind":"tree","depth":1,"support_mode":"boundary-only","masses":[0,0.5,0.5]}"#,
    )
    .unwrap();
    let out = carleson(&["tree-embed", "--in", "tree.json", "--format", "json"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["summary"]["test_constant"], 1.5);
    assert_eq!(report["rows"].as_array().unwrap().len(), 3);

    let grid = dir.path().join("grid.json");
    std::fs::write(&grid, r#"{"kind":"bitree","depths":[1,1],"masses":[[0.25,0.25],[0.25,0.25]]}"#).unwrap();
    let out = carleson(&["bitree-onebox", "--in", "grid.json", "--trials", "3"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let rows = csv_rows(&String::from_utf8(out.stdout).unwrap());
    assert_eq!(rows.len(), 3);
    assert_eq!(&rows[0][3], "2.25");

    let out = carleson(&["certify", "--in", "grid.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("expected a tree measure"));
}

#[test]
fn input_errors_exit_one() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("bad.json"),
        r#"{"kind":"tree","depth":1,"support_mode":"all-nodes","masses":[0,-1,0.5]}"#,
    )
    .unwrap();
    let out = carleson(&["tree-embed", "--in", "bad.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("node 2"));

    for args in [
        &["tree-embed", "--in", "missing.json"][..],
        &["no-such-command"],
        &["bitree-settest", "--strategy", "sometimes"],
        &["bitree-settest", "--depths", "4,4"],
        &["gap-probe", "--depths", "4"],
        &["tree-test", "--tol", "-1"],
        &["bellman-sample", "--mode", "mi00"],
    ] {
        let out = carleson(args, dir.path());
        assert_eq!(out.status.code(), Some(1), "{args:?}");
    }
    assert_eq!(carleson(&["--help"], dir.path()).status.code(), Some(0));
}

#[test]
fn failed_check_writes_counterexample() {
    let dir = tempfile::tempdir().unwrap();
    // A tolerance this loose stops the power iteration before it reaches the top eigenvalue.
    let out = carleson(&["tree-test", "--trials", "200", "--tol", "0.5"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let cx: Value = serde_json::from_slice(&std::fs::read(dir.path().join("counterexample.json")).unwrap()).unwrap();
    assert_eq!(cx["command"], "tree-test");
    assert_eq!(cx["instance"]["measure"]["kind"], "tree");
    let measure = serde_json::to_vec(&cx["instance"]["measure"]).unwrap();
    assert!(carleson_core::io::parse_measure_file(&measure).is_ok());
}

#[test]
fn signed_maximal_run_reports_without_failing() {
    let dir = tempfile::tempdir().unwrap();
    let out = carleson(&["maximal-verify", "--signed", "--trials", "50", "--format", "json"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_slice(&out.stdout).unwrap();
    for row in report["rows"].as_array().unwrap() {
        assert!(row["lhs"].as_f64().unwrap() <= 32.0 * row["rhs"].as_f64().unwrap() * (1.0 + 1e-9));
    }
    assert!(!dir.path().join("counterexample.json").exists());
}
