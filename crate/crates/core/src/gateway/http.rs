//! OpenAI-compatible HTTP adapters.
//!
//! * chat: `POST {base_url}/chat/completions`, temperature 0
//! * embed: `POST {base_url}/embeddings`, at most 64 inputs per request
//! * rerank: `POST {base_url}/rerank` with `{"query", "documents"}` returning
//!   `{"scores": [...]}`
//!
//! API keys are read from the environment variable named in the endpoint
//! config, never from config files.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Condvar, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use tracing::{debug, warn};

use super::{ChatExchange, EmbeddingVector, GatewayError, ModelGateway, TokenUsage};

pub const EMBED_BATCH: usize = 64;
pub const DEFAULT_MAX_IN_FLIGHT: usize = 8;
const MAX_RETRIES_CAP: u32 = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EndpointKind {
    Chat,
    Embed,
    Rerank,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelEndpointConfig {
    pub kind: EndpointKind,
    pub base_url: String,
    pub model_name: String,
    /// Name of the environment variable holding the API key; empty for none.
    pub api_key_env: String,
    pub timeout_secs: f64,
    pub max_retries: u32,
}

impl ModelEndpointConfig {
    pub fn validate(&self) -> Result<(), GatewayError> {
        if !(self.timeout_secs > 0.0 && self.timeout_secs.is_finite()) {
            return Err(GatewayError::Config(format!(
                "{:?} endpoint timeout must be positive",
                self.kind
            )));
        }
        if self.max_retries > MAX_RETRIES_CAP {
            return Err(GatewayError::Config(format!(
                "{:?} endpoint max_retries must be at most {MAX_RETRIES_CAP}",
                self.kind
            )));
        }
        if !(self.base_url.starts_with("http://") || self.base_url.starts_with("https://")) {
            return Err(GatewayError::Config(format!(
                "{:?} endpoint base_url must be an http(s) URL, got {:?}",
                self.kind, self.base_url
            )));
        }
        Ok(())
    }
}

/// Counting semaphore bounding concurrent requests to one endpoint.
#[derive(Debug)]
struct InFlight {
    free: Mutex<usize>,
    cv: Condvar,
}

struct Permit<'a>(&'a InFlight);

impl InFlight {
    fn new(n: usize) -> Self {
        Self {
            free: Mutex::new(n.max(1)),
            cv: Condvar::new(),
        }
    }

    fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().expect("in-flight lock");
        while *free == 0 {
            free = self.cv.wait(free).expect("in-flight lock");
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().expect("in-flight lock") += 1;
        self.0.cv.notify_one();
    }
}

struct Endpoint {
    cfg: ModelEndpointConfig,
    agent: ureq::Agent,
    attempts: AtomicUsize,
    in_flight: InFlight,
    backoff: Duration,
}

impl Endpoint {
    fn new(cfg: ModelEndpointConfig, max_in_flight: usize, backoff: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(cfg.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            cfg,
            agent,
            attempts: AtomicUsize::new(0),
            in_flight: InFlight::new(max_in_flight),
            backoff,
        }
    }

    fn url(&self, path: &str) -> String {
        format!("{}/{}", self.cfg.base_url.trim_end_matches('/'), path)
    }

    fn api_key(&self) -> Option<String> {
        if self.cfg.api_key_env.is_empty() {
            return None;
        }
        match std::env::var(&self.cfg.api_key_env) {
            Ok(k) if !k.is_empty() => Some(k),
            _ => {
                warn!(var = %self.cfg.api_key_env, "API key variable is unset; sending without auth");
                None
            }
        }
    }

    /// POST with retries on transport errors, 429 and 5xx. Other statuses fail
    /// immediately. At most `1 + max_retries` attempts.
    fn post_json(&self, path: &str, body: &Value) -> Result<Value, GatewayError> {
        let url = self.url(path);
        let key = self.api_key();
        let max_attempts = 1 + self.cfg.max_retries as usize;
        let mut last: Option<(Option<u16>, String)> = None;
        let mut made = 0;

        for attempt in 0..max_attempts {
            if attempt > 0 {
                std::thread::sleep(self.backoff * (1 << (attempt - 1)));
            }
            let _permit = self.in_flight.acquire();
            self.attempts.fetch_add(1, Ordering::SeqCst);
            made += 1;
            let mut req = self.agent.post(&url).header("Content-Type", "application/json");
            if let Some(k) = &key {
                req = req.header("Authorization", &format!("Bearer {k}"));
            }
            match req.send_json(body) {
                Ok(mut resp) => {
                    let status = resp.status().as_u16();
                    if (200..300).contains(&status) {
                        return resp.body_mut().read_json::<Value>().map_err(|e| {
                            GatewayError::Protocol(format!("{url}: invalid JSON body: {e}"))
                        });
                    }
                    let text = resp.body_mut().read_to_string().unwrap_or_default();
                    let retryable = status == 429 || status >= 500;
                    debug!(%url, status, attempt, retryable, "model endpoint returned an error status");
                    last = Some((Some(status), text));
                    if !retryable {
                        break;
                    }
                }
                Err(e) => {
                    debug!(%url, attempt, error = %e, "model endpoint transport error");
                    last = Some((None, e.to_string()));
                }
            }
        }
        let (status, message) = last.unwrap_or((None, "no attempt made".into()));
        Err(GatewayError::Http {
            endpoint: url,
            status,
            attempts: made,
            message,
        })
    }
}

/// Gateway backed by three HTTP endpoints.
pub struct HttpGateway {
    chat: Endpoint,
    embed: Endpoint,
    rerank: Endpoint,
}

impl HttpGateway {
    pub fn new(
        chat: ModelEndpointConfig,
        embed: ModelEndpointConfig,
        rerank: ModelEndpointConfig,
        max_in_flight: usize,
    ) -> Result<Self, GatewayError> {
        Self::with_backoff(chat, embed, rerank, max_in_flight, Duration::from_millis(250))
    }

    /// Like [`HttpGateway::new`] with an explicit base retry backoff
    /// (doubled per retry).
    pub fn with_backoff(
        chat: ModelEndpointConfig,
        embed: ModelEndpointConfig,
        rerank: ModelEndpointConfig,
        max_in_flight: usize,
        backoff: Duration,
    ) -> Result<Self, GatewayError> {
        for (cfg, kind) in [
            (&chat, EndpointKind::Chat),
            (&embed, EndpointKind::Embed),
            (&rerank, EndpointKind::Rerank),
        ] {
            if cfg.kind != kind {
                return Err(GatewayError::Config(format!(
                    "expected a {kind:?} endpoint, got {:?}",
                    cfg.kind
                )));
            }
            cfg.validate()?;
        }
        Ok(Self {
            chat: Endpoint::new(chat, max_in_flight, backoff),
            embed: Endpoint::new(embed, max_in_flight, backoff),
            rerank: Endpoint::new(rerank, max_in_flight, backoff),
        })
    }

    /// HTTP attempts made so far, per endpoint: (chat, embed, rerank).
    pub fn attempts(&self) -> (usize, usize, usize) {
        (
            self.chat.attempts.load(Ordering::SeqCst),
            self.embed.attempts.load(Ordering::SeqCst),
            self.rerank.attempts.load(Ordering::SeqCst),
        )
    }

    pub fn total_attempts(&self) -> usize {
        let (a, b, c) = self.attempts();
        a + b + c
    }
}

#[derive(Deserialize)]
struct EmbeddingsResponse {
    data: Vec<EmbeddingDatum>,
}

#[derive(Deserialize)]
struct EmbeddingDatum {
    #[serde(default)]
    index: Option<usize>,
    embedding: Vec<f64>,
}

impl ModelGateway for HttpGateway {
    fn embed_model_id(&self) -> String {
        self.embed.cfg.model_name.clone()
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        let model = self.embed.cfg.model_name.clone();
        let mut out: Vec<EmbeddingVector> = Vec::with_capacity(texts.len());
        let mut dim: Option<usize> = None;
        for batch in texts.chunks(EMBED_BATCH) {
            let raw = self
                .embed
                .post_json("embeddings", &json!({"model": model, "input": batch}))?;
            let mut parsed: EmbeddingsResponse = serde_json::from_value(raw)
                .map_err(|e| GatewayError::Protocol(format!("embeddings response: {e}")))?;
            if parsed.data.len() != batch.len() {
                return Err(GatewayError::Protocol(format!(
                    "embeddings response has {} vectors for {} inputs",
                    parsed.data.len(),
                    batch.len()
                )));
            }
            if parsed.data.iter().all(|d| d.index.is_some()) {
                parsed.data.sort_by_key(|d| d.index);
            }
            for d in parsed.data {
                let n = d.embedding.len();
                match dim {
                    None => dim = Some(n),
                    Some(expected) if expected != n => {
                        return Err(GatewayError::Protocol(format!(
                            "embedding dimension mismatch: {expected} vs {n}"
                        )))
                    }
                    _ => {}
                }
                out.push(EmbeddingVector {
                    model_id: model.clone(),
                    dim: n,
                    values: d.embedding,
                });
            }
        }
        Ok(out)
    }

    fn rerank(&self, query: &str, documents: &[String]) -> Result<Vec<f64>, GatewayError> {
        let raw = self
            .rerank
            .post_json("rerank", &json!({"query": query, "documents": documents}))?;
        let scores: Vec<f64> = raw
            .get("scores")
            .and_then(Value::as_array)
            .ok_or_else(|| GatewayError::Protocol("rerank response lacks \"scores\"".into()))?
            .iter()
            .map(|v| v.as_f64().unwrap_or(f64::NAN))
            .collect();
        if scores.len() != documents.len() {
            return Err(GatewayError::Protocol(format!(
                "rerank returned {} scores for {} documents",
                scores.len(),
                documents.len()
            )));
        }
        if let Some(bad) = scores.iter().find(|s| !(0.0..=1.0).contains(*s)) {
            return Err(GatewayError::Protocol(format!("rerank score {bad} outside [0, 1]")));
        }
        Ok(scores)
    }

    fn complete_chat(&self, system: &str, user: &str) -> Result<ChatExchange, GatewayError> {
        let body = json!({
            "model": self.chat.cfg.model_name,
            "temperature": 0,
            "messages": [
                {"role": "system", "content": system},
                {"role": "user", "content": user},
            ],
        });
        let started = Instant::now();
        let raw = self.chat.post_json("chat/completions", &body)?;
        let latency_ms = started.elapsed().as_millis() as u64;
        let response_text = raw
            .pointer("/choices/0/message/content")
            .and_then(Value::as_str)
            .ok_or_else(|| GatewayError::Protocol("chat response lacks choices[0].message.content".into()))?
            .to_string();
        let token_usage = raw.get("usage").map(|u| TokenUsage {
            prompt_tokens: u.get("prompt_tokens").and_then(Value::as_u64).unwrap_or(0),
            completion_tokens: u.get("completion_tokens").and_then(Value::as_u64).unwrap_or(0),
            total_tokens: u.get("total_tokens").and_then(Value::as_u64).unwrap_or(0),
        });
        Ok(ChatExchange {
            system: system.to_string(),
            user: user.to_string(),
            response_text,
            token_usage,
            latency_ms,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(kind: EndpointKind) -> ModelEndpointConfig {
        ModelEndpointConfig {
            kind,
            base_url: "http://127.0.0.1:9".into(),
            model_name: "m".into(),
            api_key_env: String::new(),
            timeout_secs: 1.0,
            max_retries: 2,
        }
    }

    #[test]
    fn config_validation() {
        let mut c = cfg(EndpointKind::Chat);
        assert!(c.validate().is_ok());
        c.timeout_secs = 0.0;
        assert!(c.validate().is_err());
        let mut c = cfg(EndpointKind::Chat);
        c.max_retries = 6;
        assert!(c.validate().is_err());
        let mut c = cfg(EndpointKind::Chat);
        c.base_url = "localhost".into();
        assert!(c.validate().is_err());
    }

    #[test]
    fn mismatched_endpoint_kinds_are_rejected() {
        let r = HttpGateway::new(cfg(EndpointKind::Embed), cfg(EndpointKind::Embed), cfg(EndpointKind::Rerank), 8);
        assert!(matches!(r, Err(GatewayError::Config(_))));
    }

    #[test]
    fn in_flight_cap_blocks_until_release() {
        let f = InFlight::new(1);
        let p = f.acquire();
        assert_eq!(*f.free.lock().unwrap(), 0);
        drop(p);
        assert_eq!(*f.free.lock().unwrap(), 1);
    }
}
