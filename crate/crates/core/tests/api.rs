mod common;

use std::sync::Arc;

use common::*;
use euleresg::gateway::{MockGateway, ModelGateway};
use euleresg::ingest::report_id_for;
use euleresg::service::jobs::{JobBoard, JobStatus};
use euleresg::service::store::Store;
use euleresg::service::{spawn_service, AppState, RunningService};
use serde_json::{json, Value};

fn start(config: euleresg::config::Config) -> (RunningService, Client) {
    let state = AppState::new(config, catalog(), Arc::new(MockGateway::new()) as Arc<dyn ModelGateway>).unwrap();
    let svc = spawn_service(state, "127.0.0.1:0".parse().unwrap()).unwrap();
    let client = Client::new(svc.url(""));
    (svc, client)
}

fn upload(client: &Client) -> String {
    let (code, body) = client.post_bytes("/reports", "application/json", &std::fs::read(report_path()).unwrap());
    assert_eq!(code, 200, "{body}");
    body["report_id"].as_str().unwrap().to_string()
}

fn run_job(client: &Client, body: Value) -> String {
    let (code, resp) = client.post_json("/analyses", &body);
    assert_eq!(code, 202, "{resp}");
    let job_id = resp["job_id"].as_str().unwrap().to_string();
    let job = client.wait_for_job(&job_id, &mut Vec::new());
    assert_eq!(job["status"], "done", "{job}");
    job_id
}

#[test]
fn health_and_catalog() {
    let dir = tempfile::tempdir().unwrap();
    let (_svc, client) = start(service_config(dir.path()));
    assert_eq!(client.get("/health"), (200, json!({"status": "ok"})));
    let (code, cat) = client.get("/catalog");
    assert_eq!(code, 200);
    let slugs: Vec<&str> = cat["sub_industries"].as_array().unwrap().iter().map(|s| s["slug"].as_str().unwrap()).collect();
    assert_eq!(slugs.len(), 3);
    for s in FIXTURE_SLUGS {
        assert!(slugs.contains(&s));
    }
}

#[test]
fn multipart_upload_sets_company_and_title() {
    let dir = tempfile::tempdir().unwrap();
    let (_svc, client) = start(service_config(dir.path()));
    let report = std::fs::read(report_path()).unwrap();
    let boundary = "----euleresg-test-boundary";
    let mut body = Vec::new();
    for (name, value) in [("company", "Override Co"), ("title", "Custom title"), ("format", "pagestream")] {
        body.extend_from_slice(format!("--{boundary}\r\nContent-Disposition: form-data; name=\"{name}\"\r\n\r\n{value}\r\n").as_bytes());
    }
    body.extend_from_slice(
        format!("--{boundary}\r\nContent-Disposition: form-data; name=\"file\"; filename=\"r.json\"\r\nContent-Type: application/json\r\n\r\n").as_bytes(),
    );
    body.extend_from_slice(&report);
    body.extend_from_slice(format!("\r\n--{boundary}--\r\n").as_bytes());
    let (code, resp) = client.post_bytes("/reports", &format!("multipart/form-data; boundary={boundary}"), &body);
    assert_eq!(code, 200, "{resp}");
    let id = resp["report_id"].as_str().unwrap();
    assert_eq!(id, report_id_for(&report));

    let (code, meta) = client.get(&format!("/reports/{id}"));
    assert_eq!(code, 200);
    assert_eq!(meta["company"], "Override Co");
    assert_eq!(meta["title"], "Custom title");
    assert_eq!(meta["page_count"], 5);
    assert_eq!(meta["segment_count"], 25);
}

#[test]
fn multipart_without_file_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let (_svc, client) = start(service_config(dir.path()));
    let boundary = "b0undary";
    let body = format!("--{boundary}\r\nContent-Disposition: form-data; name=\"company\"\r\n\r\nX\r\n--{boundary}--\r\n");
    let (code, resp) = client.post_bytes("/reports", &format!("multipart/form-data; boundary={boundary}"), body.as_bytes());
    assert_eq!(code, 400, "{resp}");
    assert_eq!(resp["code"], "invalid_report");
}

#[test]
fn pages_list_the_segments_that_cover_them() {
    let dir = tempfile::tempdir().unwrap();
    let (_svc, client) = start(service_config(dir.path()));
    let id = upload(&client);
    let (code, page) = client.get(&format!("/reports/{id}/pages/2"));
    assert_eq!(code, 200);
    assert_eq!(page["number"], 2);
    let segs = page["segments"].as_array().unwrap();
    assert!(!segs.is_empty());
    for s in segs {
        assert!(s["page_start"].as_u64().unwrap() <= 2 && s["page_end"].as_u64().unwrap() >= 2, "{s}");
    }
    // The cross-page paragraph shows up on both pages it spans.
    let (_, page3) = client.get(&format!("/reports/{id}/pages/3"));
    let spanning = segs.iter().find(|s| s["page_end"] == 3).expect("a segment spanning pages 2-3");
    assert!(page3["segments"].as_array().unwrap().iter().any(|s| s["segment_id"] == spanning["segment_id"]));

    assert_eq!(client.get(&format!("/reports/{id}/pages/6")).0, 404);
    assert_eq!(client.get("/reports/ffffffffffffffff").0, 404);
}

#[test]
fn summary_counts_match_results() {
    let dir = tempfile::tempdir().unwrap();
    let (_svc, client) = start(service_config(dir.path()));
    let id = upload(&client);
    let job_id = run_job(&client, json!({"report_id": id, "slugs": FIXTURE_SLUGS}));
    let (_, results) = client.get(&format!("/analyses/{job_id}/results"));
    let (code, summary) = client.get(&format!("/analyses/{job_id}/summary"));
    assert_eq!(code, 200);

    let mut counts = std::collections::BTreeMap::<String, u64>::new();
    for si in results["sub_industries"].as_array().unwrap() {
        for a in si["assessments"].as_array().unwrap() {
            *counts.entry(a["status"].as_str().unwrap().to_string()).or_default() += 1;
        }
    }
    assert_eq!(summary["total"], 20);
    for (status, n) in &counts {
        assert_eq!(summary[status.as_str()], *n, "{status}");
    }
    assert_eq!(summary["not_disclosed"], 3);
    assert_eq!(summary["partially_disclosed"], 3);
    let per_slug = summary["sub_industries"].as_array().unwrap();
    assert_eq!(per_slug.iter().map(|s| s["total"].as_u64().unwrap()).sum::<u64>(), 20);

    let (code, list) = client.get("/analyses");
    assert_eq!(code, 200);
    assert!(list.as_array().unwrap().iter().any(|j| j["job_id"] == job_id));
}

#[test]
fn overrides_apply_to_one_job() {
    let dir = tempfile::tempdir().unwrap();
    let (_svc, client) = start(service_config(dir.path()));
    let id = upload(&client);
    let job_id = run_job(&client, json!({"report_id": id, "slugs": ["hardware"], "config": {"retrieval.final_top_n": 2}}));
    let (_, results) = client.get(&format!("/analyses/{job_id}/results"));
    for a in results["sub_industries"][0]["assessments"].as_array().unwrap() {
        assert!(a["evidence"].as_array().unwrap().len() <= 2);
    }
    let (_, job) = client.get(&format!("/analyses/{job_id}"));
    assert_eq!(job["overrides"], json!([["retrieval.final_top_n", "2"]]));

    for bad in [
        json!({"service.max_concurrent_jobs": 4}),
        json!({"retrieval.rerank_weight": 1.5}),
        json!({"retrieval.no_such_key": 1}),
        json!({"analysis.parallelism": 0}),
    ] {
        let (code, resp) = client.post_json("/analyses", &json!({"report_id": id, "slugs": ["hardware"], "config": bad}));
        assert_eq!(code, 422, "{bad} -> {resp}");
    }
}

#[test]
fn malformed_requests_get_json_errors() {
    let dir = tempfile::tempdir().unwrap();
    let (_svc, client) = start(service_config(dir.path()));
    let id = upload(&client);
    let cases = [
        ("/analyses", json!({"report_id": id, "slugs": []}), 422),
        ("/analyses", json!({"report_id": id, "slugs": ["hardware"], "extra": 1}), 422),
        ("/chat", json!({"report_id": id, "message": "   "}), 422),
        ("/chat", json!({"report_id": "0000000000000000", "message": "hi"}), 404),
        ("/chat", json!({"report_id": id, "message": "hi", "job_id": "nope"}), 404),
    ];
    for (path, body, want) in cases {
        let (code, resp) = client.post_json(path, &body);
        assert_eq!(code, want, "{path} {body} -> {resp}");
        assert!(resp["code"].is_string() && resp["message"].is_string(), "{resp}");
    }
    let (code, resp) = client.get("/no/such/route");
    assert_eq!(code, 404);
    assert_eq!(resp["code"], "not_found");
    assert_eq!(client.get("/analyses/unknown-job").0, 404);
    assert_eq!(client.get("/chat/unknown-session").0, 404);
}

#[test]
fn chat_sessions_keep_a_transcript() {
    let dir = tempfile::tempdir().unwrap();
    let (_svc, client) = start(service_config(dir.path()));
    let id = upload(&client);
    let job_id = run_job(&client, json!({"report_id": id, "slugs": ["software-it-services"]}));

    let (code, first) = client.post_json("/chat", &json!({"report_id": id, "message": "zyxwv qqqq plorbt"}));
    assert_eq!(code, 200);
    assert_eq!(first["text"], "No relevant content found in the report.");
    assert_eq!(first["citations"], json!([]));
    let session = first["session_id"].as_str().unwrap().to_string();

    let (code, second) = client.post_json(
        "/chat",
        &json!({"session_id": session, "report_id": id, "job_id": job_id, "message": "Tell me about TC-SI-130a.1"}),
    );
    assert_eq!(code, 200);
    let text = second["text"].as_str().unwrap();
    assert!(text.contains("TC-SI-130a.1") && text.contains("disclosed") && text.contains("MWh"), "{text}");
    assert!(!second["citations"].as_array().unwrap().is_empty());

    let (code, transcript) = client.get(&format!("/chat/{session}"));
    assert_eq!(code, 200);
    let roles: Vec<&str> = transcript.as_array().unwrap().iter().map(|t| t["role"].as_str().unwrap()).collect();
    assert_eq!(roles, ["user", "assistant", "user", "assistant"]);
    assert_eq!(transcript[2]["text"], "Tell me about TC-SI-130a.1");
}

#[test]
fn ui_assets_are_served_when_configured() {
    let dir = tempfile::tempdir().unwrap();
    let ui = tempfile::tempdir().unwrap();
    std::fs::write(ui.path().join("index.html"), "<!doctype html><title>dashboard</title>").unwrap();
    let mut config = service_config(dir.path());
    config.ui_dir = Some(ui.path().to_path_buf());
    let (_svc, client) = start(config);
    let (code, body) = client.get_raw("/ui/index.html");
    assert_eq!(code, 200);
    assert!(body.contains("dashboard"));
    assert_eq!(client.get("/ui/missing.js").0, 404);
}

#[test]
fn restart_fails_running_jobs_and_resumes_queued_ones() {
    let dir = tempfile::tempdir().unwrap();
    let report_id = {
        let (_svc, client) = start(service_config(dir.path()));
        upload(&client)
    };
    // Leave one job mid-run and one queued, as a crash would.
    let (interrupted, queued) = {
        let (board, pending) = JobBoard::load(Store::open(dir.path()).unwrap()).unwrap();
        assert!(pending.is_empty());
        let a = board.create(&report_id, vec!["hardware".into()], Vec::new()).unwrap();
        board.transition(&a.job_id, JobStatus::Running, None).unwrap();
        let b = board.create(&report_id, vec!["hardware".into()], Vec::new()).unwrap();
        (a.job_id, b.job_id)
    };

    let (_svc, client) = start(service_config(dir.path()));
    let (_, job) = client.get(&format!("/analyses/{interrupted}"));
    assert_eq!(job["status"], "failed");
    assert!(job["error"].as_str().unwrap().contains("stopped"));
    let (code, resp) = client.get(&format!("/analyses/{interrupted}/results"));
    assert_eq!(code, 409, "{resp}");

    let job = client.wait_for_job(&queued, &mut Vec::new());
    assert_eq!(job["status"], "done");
    assert_eq!(client.get(&format!("/analyses/{queued}/results")).0, 200);
}
