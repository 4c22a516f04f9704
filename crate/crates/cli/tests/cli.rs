use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../core/tests/fixtures")
        .join(name)
}

fn flxc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_flxc"))
        .args(args)
        .env_remove("FLXC_WORKERS")
        .output()
        .expect("flxc runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8(o.stdout.clone()).unwrap()
}

fn requests(dir: &tempfile::TempDir, n: usize) -> PathBuf {
    let file = dir.path().join("requests.json");
    let list: Vec<Value> = (0..n).map(|_| serde_json::json!({"path": "/"})).collect();
    std::fs::write(&file, serde_json::to_string(&list).unwrap()).unwrap();
    file
}

#[test]
fn compile_matches_golden_flx() {
    let out = flxc(&["compile", path(&fixture("listing1.mjs-mini"))]);
    assert!(out.status.success());
    let golden = std::fs::read_to_string(fixture("listing1.flx")).unwrap();
    assert_eq!(stdout(&out), golden);
}

#[test]
fn compile_writes_output_and_report_files() {
    let dir = tempfile::tempdir().unwrap();
    let flx = dir.path().join("out.flx");
    let report = dir.path().join("report.json");
    let out = flxc(&[
        "compile",
        path(&fixture("listing1.mjs-mini")),
        "-o",
        path(&flx),
        "--report",
        path(&report),
    ]);
    assert!(out.status.success());
    assert!(std::fs::read_to_string(&flx)
        .unwrap()
        .starts_with("flx main & grp_res"));
    let report: Value = serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(report["groups"][0]["tag"], "grp_res");
    assert_eq!(report["groups"][0]["replicable"], false);
}

#[test]
fn check_is_equivalent_with_two_workers() {
    let dir = tempfile::tempdir().unwrap();
    let reqs = requests(&dir, 100);
    let out = flxc(&[
        "check",
        path(&fixture("listing1.mjs-mini")),
        "--requests",
        path(&reqs),
        "--workers",
        "2",
        "--json",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["equivalent"], true);
    assert_eq!(report["actual"]["finalGlobals"]["count"], 100);
}

#[test]
fn workers_default_comes_from_the_environment() {
    let out = Command::new(env!("CARGO_BIN_EXE_flxc"))
        .args(["check", path(&fixture("listing1.mjs-mini")), "--json"])
        .env("FLXC_WORKERS", "3")
        .output()
        .unwrap();
    let report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(report["workers"], 3);
}

#[test]
fn broken_placement_is_a_mismatch() {
    let dir = tempfile::tempdir().unwrap();
    let reqs = requests(&dir, 3);
    let report_file = dir.path().join("report.json");
    let out = flxc(&[
        "check",
        path(&fixture("listing1.mjs-mini")),
        "--requests",
        path(&reqs),
        "--flx",
        path(&fixture("broken_share.flx")),
        "--out",
        path(&report_file),
    ]);
    assert_eq!(out.status.code(), Some(1));
    let report: Value =
        serde_json::from_str(&std::fs::read_to_string(&report_file).unwrap()).unwrap();
    assert_eq!(report["equivalent"], false);
    let globals: Vec<&Value> = report["mismatches"]
        .as_array()
        .unwrap()
        .iter()
        .filter(|m| m["name"] == "count")
        .collect();
    assert_eq!(globals[0]["expected"], 3);
    assert_eq!(globals[0]["actual"], 0);
}

#[test]
fn missing_file_exits_with_two() {
    let out = flxc(&["check", "/definitely/not/here.mjs-mini"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn compile_error_exits_with_two() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("bad.mjs-mini");
    std::fs::write(&src, "var = 1;").unwrap();
    assert_eq!(flxc(&["check", path(&src)]).status.code(), Some(2));
    assert_eq!(flxc(&["compile", path(&src)]).status.code(), Some(2));
}

#[test]
fn runtime_failure_exits_with_three() {
    let dir = tempfile::tempdir().unwrap();
    let src = dir.path().join("boom.mjs-mini");
    std::fs::write(&src, "var x = missing;").unwrap();
    assert_eq!(flxc(&["check", path(&src)]).status.code(), Some(3));
}

#[test]
fn check_report_schema_is_stable() {
    let dir = tempfile::tempdir().unwrap();
    let reqs = requests(&dir, 2);
    let out = flxc(&[
        "check",
        path(&fixture("listing1.mjs-mini")),
        "--requests",
        path(&reqs),
        "--json",
    ]);
    let mut report: Value = serde_json::from_str(&stdout(&out)).unwrap();
    for key in ["compileMs", "referenceMs", "runtimeMs"] {
        assert!(report["timings"][key].is_number());
        report["timings"][key] = Value::from(0);
    }
    let golden_path =
        PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/golden/check_listing1.json");
    let golden: Value =
        serde_json::from_str(&std::fs::read_to_string(golden_path).unwrap()).unwrap();
    assert_eq!(report, golden);
}

#[test]
fn run_writes_a_trace() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.ndjson");
    let out = flxc(&[
        "run",
        path(&fixture("listing1.flx")),
        "--workers",
        "2",
        "--trace",
        path(&trace),
        "--json",
    ]);
    assert!(out.status.success());
    let result: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(
        result["outputs"]["responses"][0]["value"],
        "1:<h1>fluxion</h1>"
    );
    let events: Vec<Value> = std::fs::read_to_string(&trace)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert!(!events.is_empty());
    for e in &events {
        for key in ["ts", "worker", "fluxion", "event", "seq", "originId"] {
            assert!(!e[key].is_null(), "missing {key} in {e}");
        }
    }
}

#[test]
fn run_ref_and_run_agree_on_listing_three() {
    let dir = tempfile::tempdir().unwrap();
    let reqs = dir.path().join("r.json");
    std::fs::write(&reqs, r#"[{"path": "/image/text", "body": "gif"}]"#).unwrap();
    let reference = flxc(&[
        "run-ref",
        path(&fixture("listing3.mjs-mini")),
        "--requests",
        path(&reqs),
        "--json",
    ]);
    let compiled = flxc(&[
        "run",
        path(&fixture("listing3.mjs-mini")),
        "--requests",
        path(&reqs),
        "--workers",
        "2",
        "--json",
    ]);
    let reference: Value = serde_json::from_str(&stdout(&reference)).unwrap();
    let compiled: Value = serde_json::from_str(&stdout(&compiled)).unwrap();
    assert_eq!(reference["responses"], compiled["outputs"]["responses"]);
}

#[test]
fn analyze_and_scopes_emit_json() {
    let out = flxc(&["analyze", path(&fixture("fig4.mjs-mini")), "--json"]);
    let pipeline: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(pipeline["edges"].as_array().unwrap().len(), 3);
    let out = flxc(&["scopes", path(&fixture("fig4.mjs-mini")), "--json"]);
    assert!(out.status.success());
    let graph: Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert!(graph.is_object());
}

#[test]
fn custom_async_list_changes_the_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let list = dir.path().join("async.json");
    std::fs::write(
        &list,
        r#"[{"pattern": "app.get", "callbackArgIndex": "last", "kind": "start"}]"#,
    )
    .unwrap();
    let out = flxc(&[
        "--async-list",
        path(&list),
        "compile",
        path(&fixture("listing1.mjs-mini")),
    ]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = stdout(&out);
    assert!(text.contains("flx handler"));
    assert!(!text.contains("flx reply"));
}
