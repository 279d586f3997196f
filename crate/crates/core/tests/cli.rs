mod common;

use std::path::Path;
use std::process::{Command, Output};

use common::*;

fn euleresg(storage: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_euleresg"))
        .arg("--config")
        .arg(fixture("config/mock.conf"))
        .arg("--storage")
        .arg(storage)
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ingest(storage: &Path) -> String {
    let out = euleresg(storage, &["ingest", report_path().to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    stdout(&out).trim().to_string()
}

#[test]
fn ingest_is_idempotent() {
    let dir = tempfile::tempdir().unwrap();
    let first = ingest(dir.path());
    let second = euleresg(dir.path(), &["ingest", report_path().to_str().unwrap()]);
    assert_eq!(stdout(&second).trim(), first);
    assert!(stderr(&second).contains("already stored"));
    assert_eq!(first, euleresg::ingest::report_id_for(&std::fs::read(report_path()).unwrap()));
}

#[test]
fn analyze_rejects_unknown_slugs() {
    let dir = tempfile::tempdir().unwrap();
    let id = ingest(dir.path());
    let out = euleresg(dir.path(), &["analyze", &id, "--slugs", "hardware,not-a-slug"]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("not-a-slug"), "{}", stderr(&out));
}

#[test]
fn analyze_unknown_report_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = euleresg(dir.path(), &["analyze", "0123456789abcdef", "--slugs", "hardware"]);
    assert!(!out.status.success());
    assert!(stderr(&out).starts_with("error:"));
}

#[test]
fn evaluate_reports_unknown_ground_truth_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let id = ingest(dir.path());
    let results = dir.path().join("r.json");
    let out = euleresg(dir.path(), &["analyze", &id, "--slugs", "hardware", "--out", results.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));

    let gt = dir.path().join("gt.csv");
    let mut csv = read(&ground_truth_path());
    csv.push_str("Northwind Group,hardware,XX-YY-999a.9,disclosed,,\n");
    std::fs::write(&gt, csv).unwrap();
    let out = euleresg(dir.path(), &["evaluate", results.to_str().unwrap(), gt.to_str().unwrap()]);
    assert!(!out.status.success());
    assert!(stderr(&out).contains("XX-YY-999a.9"), "{}", stderr(&out));
}

#[test]
fn evaluate_writes_tables_in_each_format() {
    let dir = tempfile::tempdir().unwrap();
    let id = ingest(dir.path());
    let results = dir.path().join("all.json");
    let out = euleresg(dir.path(), &["analyze", &id, "--slugs", &FIXTURE_SLUGS.join(","), "--out", results.to_str().unwrap()]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(stdout(&out).contains("runtime "));

    for (format, marker) in [("text", "overall accuracy 1.00"), ("csv", ","), ("markdown", "|")] {
        let out = euleresg(
            dir.path(),
            &["evaluate", results.to_str().unwrap(), ground_truth_path().to_str().unwrap(), "--table", format, "--label", "mock"],
        );
        assert!(out.status.success(), "{}", stderr(&out));
        let text = stdout(&out);
        assert!(text.contains(marker) && text.contains("mock"), "{format}: {text}");
        assert!(text.contains("Northwind Group"));
    }
    let eval: serde_json::Value = serde_json::from_str(&read(&dir.path().join("all.eval.json"))).unwrap();
    assert_eq!(eval["overall_average"], 1.0);
}

#[test]
fn config_files_cannot_carry_api_keys() {
    let dir = tempfile::tempdir().unwrap();
    let conf = dir.path().join("bad.conf");
    std::fs::write(&conf, "model.chat.api_key = sk-live-123\n").unwrap();
    let out = Command::new(env!("CARGO_BIN_EXE_euleresg"))
        .args(["--config", conf.to_str().unwrap(), "catalog"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("api_key_env"), "{err}");
    assert!(!err.contains("sk-live-123"));
}

#[test]
fn catalog_prints_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = euleresg(dir.path(), &["catalog"]);
    assert!(out.status.success());
    let cat: serde_json::Value = serde_json::from_str(&stdout(&out)).unwrap();
    assert_eq!(cat["sub_industries"].as_array().unwrap().len(), 3);
}

#[test]
fn chat_answers_from_stdin() {
    use std::io::Write;
    let dir = tempfile::tempdir().unwrap();
    let id = ingest(dir.path());
    let mut child = Command::new(env!("CARGO_BIN_EXE_euleresg"))
        .arg("--config")
        .arg(fixture("config/mock.conf"))
        .arg("--storage")
        .arg(dir.path())
        .args(["chat", &id])
        .stdin(std::process::Stdio::piped())
        .stdout(std::process::Stdio::piped())
        .stderr(std::process::Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .take()
        .unwrap()
        .write_all(b"How much energy was consumed?\nzyxwv plorbt\n")
        .unwrap();
    let out = child.wait_with_output().unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("pages"), "{text}");
    assert!(text.contains("No relevant content found in the report."), "{text}");
}
