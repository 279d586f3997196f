//! Dual-channel evidence retrieval: BM25 keyword search and embedding search
//! followed by reranking, fused into one ranked list.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

use crate::catalog::{ExpandedMetric, MetricSpec};
use crate::gateway::{GatewayError, ModelGateway};
use crate::index::{query_terms, search_keyword, search_semantic, IndexError, KeywordIndex, ReportIndexes};
use crate::ingest::SegmentId;

pub const TRACE_SCHEMA: &str = "euleresg/trace/v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RetrievalConfig {
    pub keyword_top_k: usize,
    pub semantic_top_k: usize,
    /// Weight of the semantic (reranked) channel; the keyword channel gets `1 - w`.
    pub rerank_weight: f64,
    pub final_top_n: usize,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self {
            keyword_top_k: 20,
            semantic_top_k: 20,
            rerank_weight: 0.7,
            final_top_n: 5,
        }
    }
}

impl RetrievalConfig {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.rerank_weight) {
            return Err(format!("rerank_weight must be in [0, 1], got {}", self.rerank_weight));
        }
        if self.final_top_n == 0 {
            return Err("final_top_n must be at least 1".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Channel {
    Keyword,
    Semantic,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalCandidate {
    pub segment_id: SegmentId,
    pub channel: Channel,
    pub raw_score: f64,
    pub normalized_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusedCandidate {
    pub segment_id: SegmentId,
    pub keyword_norm: Option<f64>,
    pub semantic_norm: Option<f64>,
    pub fused_score: f64,
    pub channels_hit: u8,
}

#[derive(Debug, Error)]
pub enum RetrievalError {
    #[error("semantic channel failed: {0}")]
    Gateway(#[from] GatewayError),
    #[error("semantic channel failed: {0}")]
    Index(#[from] IndexError),
}

/// Min-max normalization. A single value, or a pool where all values are
/// equal, normalizes to 1.0.
pub fn min_max_normalize(raw: &[f64]) -> Vec<f64> {
    let min = raw.iter().copied().fold(f64::INFINITY, f64::min);
    let max = raw.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    raw.iter()
        .map(|&x| if max > min { (x - min) / (max - min) } else { 1.0 })
        .collect()
}

/// Keyword query for a metric: its name's tokens, then its keywords, with
/// duplicates removed in first-occurrence order.
pub fn metric_query_terms(metric: &MetricSpec) -> Vec<String> {
    let mut sources = vec![metric.name.clone()];
    sources.extend(metric.keywords.iter().cloned());
    query_terms(&sources)
}

/// BM25 channel for arbitrary query terms.
pub fn keyword_channel<S: AsRef<str>>(terms: &[S], index: &KeywordIndex, cfg: &RetrievalConfig) -> Vec<RetrievalCandidate> {
    let hits = search_keyword(index, terms, cfg.keyword_top_k);
    let raw: Vec<f64> = hits.iter().map(|h| h.1).collect();
    hits.into_iter()
        .zip(min_max_normalize(&raw))
        .map(|((segment_id, raw_score), normalized_score)| RetrievalCandidate {
            segment_id,
            channel: Channel::Keyword,
            raw_score,
            normalized_score,
        })
        .collect()
}

pub fn retrieve_keyword_channel(metric: &MetricSpec, index: &KeywordIndex, cfg: &RetrievalConfig) -> Vec<RetrievalCandidate> {
    keyword_channel(&metric_query_terms(metric), index, cfg)
}

/// Embedding channel for an arbitrary query text: cosine top-k, then rerank
/// against the same text. Rerank scores are used as the normalized score.
pub fn semantic_channel(
    query: &str,
    indexes: &ReportIndexes,
    gateway: &dyn ModelGateway,
    cfg: &RetrievalConfig,
) -> Result<Vec<RetrievalCandidate>, RetrievalError> {
    let embedded = gateway.embed_texts(&[query.to_string()])?;
    let qv = embedded
        .into_iter()
        .next()
        .ok_or_else(|| GatewayError::Protocol("no embedding returned for query".into()))?;
    let first_stage = search_semantic(&indexes.vector, &qv.values, cfg.semantic_top_k)?;
    if first_stage.is_empty() {
        return Ok(Vec::new());
    }
    let docs: Vec<String> = first_stage
        .iter()
        .map(|(id, _)| indexes.segment(id).map(|s| s.text.clone()).unwrap_or_default())
        .collect();
    let scores = gateway.rerank(query, &docs)?;
    if scores.len() != docs.len() {
        return Err(GatewayError::Protocol(format!("rerank returned {} scores for {} documents", scores.len(), docs.len())).into());
    }
    let mut out: Vec<RetrievalCandidate> = first_stage
        .into_iter()
        .zip(scores)
        .map(|((segment_id, _), s)| RetrievalCandidate {
            segment_id,
            channel: Channel::Semantic,
            raw_score: s,
            normalized_score: s.clamp(0.0, 1.0),
        })
        .collect();
    out.sort_by(|a, b| {
        b.normalized_score
            .total_cmp(&a.normalized_score)
            .then_with(|| a.segment_id.cmp(&b.segment_id))
    });
    Ok(out)
}

pub fn retrieve_semantic_channel(
    metric: &ExpandedMetric,
    indexes: &ReportIndexes,
    gateway: &dyn ModelGateway,
    cfg: &RetrievalConfig,
) -> Result<Vec<RetrievalCandidate>, RetrievalError> {
    semantic_channel(&metric.expansion_text, indexes, gateway, cfg)
}

fn rank(a: &FusedCandidate, b: &FusedCandidate) -> Ordering {
    b.fused_score
        .total_cmp(&a.fused_score)
        .then_with(|| b.channels_hit.cmp(&a.channels_hit))
        .then_with(|| a.segment_id.cmp(&b.segment_id))
}

/// Weighted fusion of the two channels and top-n selection.
pub fn fuse_and_select(kw: &[RetrievalCandidate], sem: &[RetrievalCandidate], cfg: &RetrievalConfig) -> Vec<FusedCandidate> {
    let w = cfg.rerank_weight;
    let mut pool: BTreeMap<&SegmentId, (Option<f64>, Option<f64>)> = BTreeMap::new();
    let keep_max = |slot: &mut Option<f64>, x: f64| *slot = Some(slot.map_or(x, |y| y.max(x)));
    for c in kw {
        keep_max(&mut pool.entry(&c.segment_id).or_default().0, c.normalized_score);
    }
    for c in sem {
        keep_max(&mut pool.entry(&c.segment_id).or_default().1, c.normalized_score);
    }
    let mut fused: Vec<FusedCandidate> = pool
        .into_iter()
        .map(|(id, (k, s))| {
            let fused_score = match (k, s) {
                (Some(k), Some(s)) => w * s + (1.0 - w) * k,
                (None, Some(s)) => w * s,
                (Some(k), None) => (1.0 - w) * k,
                (None, None) => unreachable!("pool entries have at least one channel"),
            };
            FusedCandidate {
                segment_id: id.clone(),
                keyword_norm: k,
                semantic_norm: s,
                fused_score,
                channels_hit: u8::from(k.is_some()) + u8::from(s.is_some()),
            }
        })
        .collect();
    fused.sort_by(rank);
    fused.truncate(cfg.final_top_n);
    fused
}

/// What to retrieve for: keyword terms and a semantic query text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalQuery {
    pub keyword_terms: Vec<String>,
    pub semantic_text: String,
}

impl RetrievalQuery {
    pub fn for_metric(metric: &ExpandedMetric) -> Self {
        Self {
            keyword_terms: metric_query_terms(&metric.metric),
            semantic_text: metric.expansion_text.clone(),
        }
    }

    /// A free-text question used as both keyword source and semantic query.
    pub fn for_message(message: &str) -> Self {
        Self {
            keyword_terms: query_terms(&[message]),
            semantic_text: message.to_string(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalOutcome {
    pub keyword: Vec<RetrievalCandidate>,
    pub semantic: Vec<RetrievalCandidate>,
    pub fused: Vec<FusedCandidate>,
    /// Set when the semantic channel failed and only keyword hits were used.
    pub degraded: Option<String>,
}

/// Run both channels and fuse. A failing semantic channel degrades to
/// keyword-only results instead of failing.
pub fn retrieve(
    query: &RetrievalQuery,
    indexes: &ReportIndexes,
    gateway: &dyn ModelGateway,
    cfg: &RetrievalConfig,
) -> RetrievalOutcome {
    let keyword = keyword_channel(&query.keyword_terms, &indexes.keyword, cfg);
    let (semantic, degraded) = match semantic_channel(&query.semantic_text, indexes, gateway, cfg) {
        Ok(s) => (s, None),
        Err(e) => (Vec::new(), Some(e.to_string())),
    };
    let fused = fuse_and_select(&keyword, &semantic, cfg);
    RetrievalOutcome {
        keyword,
        semantic,
        fused,
        degraded,
    }
}

/// Per-metric retrieval trace for debugging and the dashboard.
pub fn trace_json(metric_code: &str, query: &RetrievalQuery, outcome: &RetrievalOutcome) -> serde_json::Value {
    json!({
        "schema": TRACE_SCHEMA,
        "metric_code": metric_code,
        "query": query,
        "keyword": outcome.keyword,
        "semantic": outcome.semantic,
        "fused": outcome.fused,
        "degraded": outcome.degraded,
    })
}
