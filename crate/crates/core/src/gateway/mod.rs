//! Uniform access to chat, embedding and rerank models.
//!
//! Two backends ship: [`HttpGateway`] for hosted OpenAI-compatible endpoints
//! and [`MockGateway`], a deterministic stand-in used by every golden test.
//! [`FaultInjectingGateway`] and [`FailingGateway`] exist to exercise the
//! degraded paths.

mod http;
mod mock;

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};

use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use http::{EndpointKind, HttpGateway, ModelEndpointConfig, DEFAULT_MAX_IN_FLIGHT};
pub use mock::{mock_embedding, MockGateway, MOCK_EMBED_DIM, MOCK_EMBED_MODEL};

#[derive(Debug, Clone, Error)]
pub enum GatewayError {
    #[error("{endpoint} request failed after {attempts} attempt(s){}: {message}", status.map(|s| format!(" (status {s})")).unwrap_or_default())]
    Http {
        endpoint: String,
        status: Option<u16>,
        attempts: usize,
        message: String,
    },
    #[error("protocol error: {0}")]
    Protocol(String),
    #[error("unroutable mock prompt")]
    Unroutable,
    #[error("invalid gateway configuration: {0}")]
    Config(String),
    #[error("injected fault: {0}")]
    Injected(String),
}

impl GatewayError {
    pub fn status(&self) -> Option<u16> {
        match self {
            GatewayError::Http { status, .. } => *status,
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingVector {
    pub model_id: String,
    pub dim: usize,
    pub values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn norm(&self) -> f64 {
        self.values.iter().map(|v| v * v).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenUsage {
    pub prompt_tokens: u64,
    pub completion_tokens: u64,
    pub total_tokens: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatExchange {
    pub system: String,
    pub user: String,
    pub response_text: String,
    pub token_usage: Option<TokenUsage>,
    pub latency_ms: u64,
}

/// A chat + embedding + rerank backend. Implementations are shared across
/// threads; each call is independent.
pub trait ModelGateway: Send + Sync {
    /// Identifier of the embedding model; embeddings with different ids are
    /// never mixed in one index.
    fn embed_model_id(&self) -> String;

    /// One vector per input text, in input order.
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError>;

    /// One relevance score in `[0, 1]` per document, in input order.
    fn rerank(&self, query: &str, documents: &[String]) -> Result<Vec<f64>, GatewayError>;

    fn complete_chat(&self, system: &str, user: &str) -> Result<ChatExchange, GatewayError>;
}

impl<G: ModelGateway + ?Sized> ModelGateway for Arc<G> {
    fn embed_model_id(&self) -> String {
        (**self).embed_model_id()
    }
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        (**self).embed_texts(texts)
    }
    fn rerank(&self, query: &str, documents: &[String]) -> Result<Vec<f64>, GatewayError> {
        (**self).rerank(query, documents)
    }
    fn complete_chat(&self, system: &str, user: &str) -> Result<ChatExchange, GatewayError> {
        (**self).complete_chat(system, user)
    }
}

/// Cosine similarity; defined as 0 when either vector is all zeros.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut dot, mut na, mut nb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        dot += x * y;
        na += x * x;
        nb += y * y;
    }
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot / (na.sqrt() * nb.sqrt())).clamp(-1.0, 1.0)
}

/// Gateway whose every call fails. Embedding model id mirrors the mock.
#[derive(Debug, Clone, Copy, Default)]
pub struct FailingGateway;

impl ModelGateway for FailingGateway {
    fn embed_model_id(&self) -> String {
        MOCK_EMBED_MODEL.to_string()
    }
    fn embed_texts(&self, _: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        Err(GatewayError::Injected("embed".into()))
    }
    fn rerank(&self, _: &str, _: &[String]) -> Result<Vec<f64>, GatewayError> {
        Err(GatewayError::Injected("rerank".into()))
    }
    fn complete_chat(&self, _: &str, _: &str) -> Result<ChatExchange, GatewayError> {
        Err(GatewayError::Injected("chat".into()))
    }
}

/// Wraps another gateway and fails a seeded random fraction of calls.
pub struct FaultInjectingGateway {
    inner: Arc<dyn ModelGateway>,
    failure_rate: f64,
    rng: Mutex<StdRng>,
    calls: AtomicUsize,
    failures: AtomicUsize,
}

impl FaultInjectingGateway {
    pub fn new(inner: Arc<dyn ModelGateway>, failure_rate: f64, seed: u64) -> Self {
        Self {
            inner,
            failure_rate: failure_rate.clamp(0.0, 1.0),
            rng: Mutex::new(StdRng::seed_from_u64(seed)),
            calls: AtomicUsize::new(0),
            failures: AtomicUsize::new(0),
        }
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    pub fn failures(&self) -> usize {
        self.failures.load(Ordering::SeqCst)
    }

    fn roll(&self, op: &str) -> Result<(), GatewayError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let draw: f64 = self.rng.lock().expect("rng lock").random();
        if draw < self.failure_rate {
            self.failures.fetch_add(1, Ordering::SeqCst);
            return Err(GatewayError::Injected(format!("{op} call dropped")));
        }
        Ok(())
    }
}

impl ModelGateway for FaultInjectingGateway {
    fn embed_model_id(&self) -> String {
        self.inner.embed_model_id()
    }
    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        self.roll("embed")?;
        self.inner.embed_texts(texts)
    }
    fn rerank(&self, query: &str, documents: &[String]) -> Result<Vec<f64>, GatewayError> {
        self.roll("rerank")?;
        self.inner.rerank(query, documents)
    }
    fn complete_chat(&self, system: &str, user: &str) -> Result<ChatExchange, GatewayError> {
        self.roll("chat")?;
        self.inner.complete_chat(system, user)
    }
}
