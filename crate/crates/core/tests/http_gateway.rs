//! The OpenAI-compatible adapter against a local stand-in server that
//! answers with the mock backend's responses.

mod common;

use std::collections::VecDeque;
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use axum::extract::State;
use axum::http::{HeaderMap, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::{Json, Router};
use common::*;
use euleresg::analysis::{analyze_report, AnalysisConfig};
use euleresg::gateway::{EndpointKind, GatewayError, HttpGateway, MockGateway, ModelEndpointConfig, ModelGateway};
use euleresg::index::{EmbeddingCache, ReportIndexes};
use euleresg::ingest::{extract_pages, segment_document, IngestOptions, PdftotextExtractor, ReportFormat};
use serde_json::{json, Value};

#[derive(Default)]
struct Script {
    /// Statuses returned, in order, before requests start succeeding.
    failures: VecDeque<u16>,
    /// (path, authorization header, body) of every request.
    seen: Vec<(String, Option<String>, Value)>,
    rerank_override: Option<Value>,
    chat_override: Option<Value>,
}

type Shared = Arc<Mutex<Script>>;

fn record(state: &Shared, path: &str, headers: &HeaderMap, body: &Value) -> Option<Response> {
    let mut s = state.lock().unwrap();
    let auth = headers.get("authorization").and_then(|v| v.to_str().ok()).map(str::to_string);
    s.seen.push((path.to_string(), auth, body.clone()));
    s.failures
        .pop_front()
        .map(|code| (StatusCode::from_u16(code).unwrap(), "scripted failure").into_response())
}

async fn chat(State(state): State<Shared>, headers: HeaderMap, Json(body): Json<Value>) -> Response {
    if let Some(r) = record(&state, "chat", &headers, &body) {
        return r;
    }
    if let Some(v) = state.lock().unwrap().chat_override.clone() {
        return Json(v).into_response();
    }
    let system = body["messages"][0]["content"].as_str().unwrap_or_default();
    let user = body["messages"][1]["content"].as_str().unwrap_or_default();
    match MockGateway::new().complete_chat(system, user) {
        Ok(x) => Json(json!({
            "choices": [{"message": {"role": "assistant", "content": x.response_text}}],
            "usage": {"prompt_tokens": 10, "completion_tokens": 5, "total_tokens": 15}
        }))
        .into_response(),
        Err(e) => (StatusCode::BAD_REQUEST, e.to_string()).into_response(),
    }
}

async fn embeddings(State(state): State<Shared>, headers: HeaderMap, Json(body): Json<Value>) -> Response {
    if let Some(r) = record(&state, "embeddings", &headers, &body) {
        return r;
    }
    let inputs: Vec<String> = serde_json::from_value(body["input"].clone()).unwrap();
    let vectors = MockGateway::new().embed_texts(&inputs).unwrap();
    // Reversed on purpose: the client must reorder by index.
    let data: Vec<Value> = vectors
        .into_iter()
        .enumerate()
        .rev()
        .map(|(i, v)| json!({"index": i, "embedding": v.values}))
        .collect();
    Json(json!({"data": data})).into_response()
}

async fn rerank(State(state): State<Shared>, headers: HeaderMap, Json(body): Json<Value>) -> Response {
    if let Some(r) = record(&state, "rerank", &headers, &body) {
        return r;
    }
    if let Some(v) = state.lock().unwrap().rerank_override.clone() {
        return Json(v).into_response();
    }
    let query = body["query"].as_str().unwrap_or_default();
    let docs: Vec<String> = serde_json::from_value(body["documents"].clone()).unwrap();
    Json(json!({"scores": MockGateway::new().rerank(query, &docs).unwrap()})).into_response()
}

async fn slow_chat() -> Response {
    tokio::time::sleep(Duration::from_secs(3)).await;
    Json(json!({"choices": [{"message": {"content": "late"}}]})).into_response()
}

struct Server {
    base: String,
    script: Shared,
    _shutdown: tokio::sync::oneshot::Sender<()>,
}

fn start_server() -> Server {
    let script: Shared = Arc::default();
    let app = Router::new()
        .route("/v1/chat/completions", post(chat))
        .route("/v1/embeddings", post(embeddings))
        .route("/v1/rerank", post(rerank))
        .route("/slow/chat/completions", post(slow_chat))
        .with_state(script.clone());
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    listener.set_nonblocking(true).unwrap();
    let addr = listener.local_addr().unwrap();
    let (tx, rx) = tokio::sync::oneshot::channel::<()>();
    std::thread::spawn(move || {
        let rt = tokio::runtime::Builder::new_multi_thread().worker_threads(2).enable_all().build().unwrap();
        rt.block_on(async move {
            let listener = tokio::net::TcpListener::from_std(listener).unwrap();
            axum::serve(listener, app)
                .with_graceful_shutdown(async {
                    let _ = rx.await;
                })
                .await
                .unwrap();
        });
    });
    Server {
        base: format!("http://{addr}"),
        script,
        _shutdown: tx,
    }
}

fn endpoint(kind: EndpointKind, base_url: &str) -> ModelEndpointConfig {
    ModelEndpointConfig {
        kind,
        base_url: base_url.to_string(),
        model_name: format!("{kind:?}-model").to_lowercase(),
        api_key_env: String::new(),
        timeout_secs: 5.0,
        max_retries: 2,
    }
}

fn gateway(server: &Server) -> HttpGateway {
    let base = format!("{}/v1", server.base);
    HttpGateway::with_backoff(
        endpoint(EndpointKind::Chat, &base),
        endpoint(EndpointKind::Embed, &base),
        endpoint(EndpointKind::Rerank, &base),
        4,
        Duration::from_millis(1),
    )
    .unwrap()
}

#[test]
fn full_pipeline_over_http_matches_the_mock_backend() {
    let server = start_server();
    let http = gateway(&server);
    let bytes = std::fs::read(report_path()).unwrap();
    let doc = extract_pages(&bytes, ReportFormat::Pagestream, &IngestOptions::default(), &PdftotextExtractor::default()).unwrap();
    let indexes = ReportIndexes::build(&doc.report_id, segment_document(&doc), &http, &EmbeddingCache::new()).unwrap();
    assert_eq!(indexes.vector.model_id, "embed-model");

    let cfg = AnalysisConfig::default();
    let over_http = analyze_report(&catalog(), &slugs(), &doc.company, &indexes, &http, &cfg).unwrap();
    let local = analyze_report(&catalog(), &slugs(), &doc.company, &fixture_indexes(), &MockGateway::new(), &cfg).unwrap();
    for ((_, a), (_, b)) in over_http.assessments().zip(local.assessments()) {
        assert_eq!((a.status, &a.extracted, &a.evidence, a.degraded), (b.status, &b.extracted, &b.evidence, b.degraded), "{}", a.metric_code);
    }

    let script = server.script.lock().unwrap();
    let chat_bodies: Vec<&Value> = script.seen.iter().filter(|(p, _, _)| p == "chat").map(|(_, _, b)| b).collect();
    assert!(!chat_bodies.is_empty());
    assert!(chat_bodies.iter().all(|b| b["temperature"] == 0 && b["model"] == "chat-model"));
}

#[test]
fn transient_failures_are_retried() {
    let server = start_server();
    server.script.lock().unwrap().failures = VecDeque::from([500, 429]);
    let http = gateway(&server);
    let reply = http.complete_chat("#TASK:chat", "Question: q\n\nSources:\n[SOURCE 1 | pages 1–1]\nhello\n").unwrap();
    assert!(reply.response_text.contains("hello"));
    assert_eq!(http.attempts().0, 3);
    assert_eq!(reply.token_usage.unwrap().total_tokens, 15);
}

#[test]
fn client_errors_are_not_retried() {
    let server = start_server();
    server.script.lock().unwrap().failures = VecDeque::from([400]);
    let http = gateway(&server);
    let err = http.complete_chat("#TASK:chat", "x").unwrap_err();
    assert_eq!(err.status(), Some(400));
    assert_eq!(http.attempts().0, 1);
}

#[test]
fn retries_are_bounded() {
    let server = start_server();
    server.script.lock().unwrap().failures = VecDeque::from([503, 503, 503, 503]);
    let http = gateway(&server);
    let err = http.rerank("q", &["d".to_string()]).unwrap_err();
    assert!(matches!(err, GatewayError::Http { .. }), "{err}");
    assert_eq!(err.status(), Some(503));
    assert_eq!(http.attempts().2, 3);
}

#[test]
fn api_key_comes_from_the_named_environment_variable() {
    let server = start_server();
    std::env::set_var("EULERESG_TEST_CHAT_KEY", "secret-123");
    let base = format!("{}/v1", server.base);
    let mut chat = endpoint(EndpointKind::Chat, &base);
    chat.api_key_env = "EULERESG_TEST_CHAT_KEY".into();
    let http = HttpGateway::new(chat, endpoint(EndpointKind::Embed, &base), endpoint(EndpointKind::Rerank, &base), 2).unwrap();
    http.complete_chat("#TASK:chat", "x").unwrap();
    http.embed_texts(&["a".to_string()]).unwrap();
    let script = server.script.lock().unwrap();
    assert_eq!(script.seen[0].1.as_deref(), Some("Bearer secret-123"));
    assert_eq!(script.seen[1].1, None);
}

#[test]
fn embeddings_are_batched_and_reordered() {
    let server = start_server();
    let http = gateway(&server);
    let texts: Vec<String> = (0..130).map(|i| format!("text number {i}")).collect();
    let vectors = http.embed_texts(&texts).unwrap();
    assert_eq!(vectors.len(), 130);
    for (t, v) in texts.iter().zip(&vectors) {
        assert_eq!(v.values, euleresg::gateway::mock_embedding(t));
    }
    let sizes: Vec<usize> = server
        .script
        .lock()
        .unwrap()
        .seen
        .iter()
        .map(|(_, _, b)| b["input"].as_array().unwrap().len())
        .collect();
    assert_eq!(sizes, vec![64, 64, 2]);
}

#[test]
fn slow_endpoints_time_out() {
    let server = start_server();
    let slow = format!("{}/slow", server.base);
    let base = format!("{}/v1", server.base);
    let mut chat = endpoint(EndpointKind::Chat, &slow);
    chat.timeout_secs = 0.3;
    chat.max_retries = 0;
    let http = HttpGateway::new(chat, endpoint(EndpointKind::Embed, &base), endpoint(EndpointKind::Rerank, &base), 2).unwrap();
    let started = Instant::now();
    assert!(http.complete_chat("s", "u").is_err());
    assert!(started.elapsed() < Duration::from_secs(2));
}

#[test]
fn malformed_responses_are_protocol_errors() {
    let server = start_server();
    let http = gateway(&server);
    server.script.lock().unwrap().rerank_override = Some(json!({"scores": [1.5]}));
    assert!(matches!(http.rerank("q", &["d".into()]), Err(GatewayError::Protocol(_))));
    server.script.lock().unwrap().rerank_override = Some(json!({"scores": [0.5, 0.5]}));
    assert!(matches!(http.rerank("q", &["d".into()]), Err(GatewayError::Protocol(_))));
    server.script.lock().unwrap().chat_override = Some(json!({"choices": []}));
    assert!(matches!(http.complete_chat("s", "u"), Err(GatewayError::Protocol(_))));
}
