//! Start the HTTP service on a free port with the mock backend, upload the
//! fixture report, run an analysis job and read back its summary.
//!
//!     cargo run --example service_roundtrip

use std::path::PathBuf;
use std::sync::Arc;
use std::time::Duration;

use euleresg::catalog::Catalog;
use euleresg::config::Config;
use euleresg::gateway::MockGateway;
use euleresg::service::{spawn_service, AppState};
use serde_json::{json, Value};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let storage = std::env::temp_dir().join(format!("euleresg-example-{}", std::process::id()));
    let config = Config {
        storage_root: storage.clone(),
        catalog_path: root.join("catalog/sasb_fixture.json"),
        ..Config::default()
    };
    let catalog = Catalog::load(&config.catalog_path)?;
    let state = AppState::new(config, catalog, Arc::new(MockGateway::new()))?;
    let svc = spawn_service(state, "127.0.0.1:0".parse()?)?;
    println!("service on {}", svc.url(""));

    let agent: ureq::Agent = ureq::Agent::config_builder().http_status_as_error(false).build().into();
    let report = std::fs::read(root.join("reports/northwind_2024.json"))?;
    let uploaded: Value = agent
        .post(svc.url("/reports"))
        .header("Content-Type", "application/json")
        .send(&report[..])?
        .body_mut()
        .read_json()?;
    println!("POST /reports -> {uploaded}");
    let report_id = uploaded["report_id"].as_str().ok_or("no report id")?;

    let job: Value = agent
        .post(svc.url("/analyses"))
        .send_json(json!({"report_id": report_id, "slugs": ["software-it-services", "hardware"]}))?
        .body_mut()
        .read_json()?;
    println!("POST /analyses -> {job}");
    let job_id = job["job_id"].as_str().ok_or("no job id")?;

    loop {
        let status: Value = agent.get(svc.url(&format!("/analyses/{job_id}"))).call()?.body_mut().read_json()?;
        println!("  status {}", status["status"]);
        if status["status"] == "done" || status["status"] == "failed" {
            break;
        }
        std::thread::sleep(Duration::from_millis(20));
    }
    let summary: Value = agent.get(svc.url(&format!("/analyses/{job_id}/summary"))).call()?.body_mut().read_json()?;
    println!("GET summary -> {}", serde_json::to_string_pretty(&summary)?);

    drop(svc);
    std::fs::remove_dir_all(storage)?;
    Ok(())
}
