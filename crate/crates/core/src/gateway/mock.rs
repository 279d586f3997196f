//! Deterministic offline backend.
//!
//! * Embeddings: signed feature hashing of lowercase alphanumeric tokens into
//!   256 buckets with FNV-1a-64, then L2 normalization.
//! * Rerank: `(1 + cosine) / 2` over the mock embeddings.
//! * Chat: routed by the `#TASK:` marker line. Analysis prompts get a
//!   rule-based verdict, expansion prompts the name/description/keyword
//!   concatenation, chat prompts a template quoting the top source.

use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::LazyLock;

use regex::Regex;
use serde_json::json;

use super::{cosine, ChatExchange, EmbeddingVector, GatewayError, ModelGateway};
use crate::analysis::units::UnitTable;
use crate::catalog::definition_concat;
use crate::text::raw_tokens;

pub const MOCK_EMBED_DIM: usize = 256;
pub const MOCK_EMBED_MODEL: &str = "mock-fnv1a-256";

/// Maximum distance, in whitespace tokens, between a keyword and a number
/// for the number to count as that keyword's value.
const VALUE_WINDOW: usize = 6;

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

/// The mock embedding of one text.
pub fn mock_embedding(text: &str) -> Vec<f64> {
    let mut v = vec![0.0; MOCK_EMBED_DIM];
    for token in raw_tokens(text) {
        let h = fnv1a64(token.as_bytes());
        let idx = (h % MOCK_EMBED_DIM as u64) as usize;
        let sign = if (h >> 62) & 1 == 0 { 1.0 } else { -1.0 };
        v[idx] += sign;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
    v
}

#[derive(Debug, Default)]
pub struct MockGateway {
    embed_calls: AtomicUsize,
    rerank_calls: AtomicUsize,
    chat_calls: AtomicUsize,
}

impl MockGateway {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn embed_calls(&self) -> usize {
        self.embed_calls.load(Ordering::SeqCst)
    }

    pub fn rerank_calls(&self) -> usize {
        self.rerank_calls.load(Ordering::SeqCst)
    }

    pub fn chat_calls(&self) -> usize {
        self.chat_calls.load(Ordering::SeqCst)
    }

    /// Total calls across all three operations.
    pub fn calls(&self) -> usize {
        self.embed_calls() + self.rerank_calls() + self.chat_calls()
    }
}

impl ModelGateway for MockGateway {
    fn embed_model_id(&self) -> String {
        MOCK_EMBED_MODEL.to_string()
    }

    fn embed_texts(&self, texts: &[String]) -> Result<Vec<EmbeddingVector>, GatewayError> {
        self.embed_calls.fetch_add(1, Ordering::SeqCst);
        Ok(texts
            .iter()
            .map(|t| EmbeddingVector {
                model_id: MOCK_EMBED_MODEL.to_string(),
                dim: MOCK_EMBED_DIM,
                values: mock_embedding(t),
            })
            .collect())
    }

    fn rerank(&self, query: &str, documents: &[String]) -> Result<Vec<f64>, GatewayError> {
        self.rerank_calls.fetch_add(1, Ordering::SeqCst);
        let q = mock_embedding(query);
        Ok(documents
            .iter()
            .map(|d| (1.0 + cosine(&q, &mock_embedding(d))) / 2.0)
            .collect())
    }

    fn complete_chat(&self, system: &str, user: &str) -> Result<ChatExchange, GatewayError> {
        self.chat_calls.fetch_add(1, Ordering::SeqCst);
        let task = system
            .lines()
            .chain(user.lines())
            .find_map(|l| l.trim().strip_prefix("#TASK:"))
            .map(str::trim);
        let response_text = match task {
            Some("analysis") => analysis_oracle(user),
            Some("expansion") => expansion_oracle(user),
            Some("chat") => chat_oracle(user),
            _ => return Err(GatewayError::Unroutable),
        };
        Ok(ChatExchange {
            system: system.to_string(),
            user: user.to_string(),
            response_text,
            token_usage: None,
            latency_ms: 0,
        })
    }
}

fn field<'a>(prompt: &'a str, name: &str) -> &'a str {
    prompt
        .lines()
        .find_map(|l| l.strip_prefix(name).and_then(|r| r.strip_prefix(':')))
        .map(str::trim)
        .unwrap_or("")
}

fn keyword_list(prompt: &str) -> Vec<String> {
    field(prompt, "Keywords")
        .split(';')
        .map(str::trim)
        .filter(|k| !k.is_empty())
        .map(str::to_string)
        .collect()
}

fn expansion_oracle(user: &str) -> String {
    definition_concat(
        field(user, "Metric name"),
        field(user, "Description"),
        &keyword_list(user),
    )
}

static EVIDENCE_HEADER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"^\[(EVIDENCE|SOURCE) (\d+) \| pages (\d+)–(\d+)\]$").unwrap());

struct Block {
    index: usize,
    pages: (u32, u32),
    text: String,
}

fn blocks(user: &str) -> Vec<Block> {
    let mut out: Vec<Block> = Vec::new();
    for line in user.lines() {
        if let Some(c) = EVIDENCE_HEADER.captures(line.trim()) {
            out.push(Block {
                index: c[2].parse().unwrap_or(0),
                pages: (c[3].parse().unwrap_or(0), c[4].parse().unwrap_or(0)),
                text: String::new(),
            });
        } else if let Some(b) = out.last_mut() {
            if !b.text.is_empty() {
                b.text.push('\n');
            }
            b.text.push_str(line);
        }
    }
    for b in &mut out {
        b.text = b.text.trim().to_string();
    }
    out
}

/// A number and the unit written next to it.
#[derive(Debug, Clone, PartialEq)]
struct Quantity {
    value_raw: String,
    unit_raw: String,
    /// Index of the last whitespace token the quantity spans.
    end: usize,
}

static NUMBER: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"^(US\$|A\$|\$|€|£)?([+-]?(?:\d{1,3}(?:,\d{3})+|\d+)(?:\.\d+)?)(.*)$").unwrap()
});

fn trim_punct(w: &str) -> &str {
    w.trim_start_matches(['(', '[', '"', '\''])
        .trim_end_matches([',', '.', ';', ':', ')', ']', '"', '\'', '!', '?'])
}

/// Try to read a quantity starting at whitespace token `i`.
fn quantity_at(words: &[&str], i: usize, units: &UnitTable) -> Option<Quantity> {
    let caps = NUMBER.captures(trim_punct(words[i]))?;
    let currency = caps.get(1).map(|m| m.as_str());
    let value_raw = caps[2].to_string();
    let suffix = caps[3].trim();

    if let Some(cur) = currency {
        if !suffix.is_empty() {
            return None;
        }
        // "$1.2 million" -> unit "$ million"
        if let Some(next) = words.get(i + 1).map(|w| trim_punct(w)) {
            let with_magnitude = format!("{cur} {next}");
            if units.resolve(&with_magnitude).is_some_and(|r| r.magnitude != 1.0) {
                return Some(Quantity { value_raw, unit_raw: with_magnitude, end: i + 1 });
            }
        }
        return Some(Quantity { value_raw, unit_raw: cur.to_string(), end: i });
    }
    if !suffix.is_empty() {
        return units
            .recognizes(suffix)
            .then(|| Quantity { value_raw, unit_raw: suffix.to_string(), end: i });
    }
    // Longest unit phrase first: "metric tons CO2e" before "metric tons".
    for len in (1..=3).rev() {
        if i + len >= words.len() {
            continue;
        }
        let phrase_words = &words[i + 1..=i + len];
        let last = trim_punct(phrase_words[len - 1]);
        // Stop at a sentence break inside the phrase.
        if phrase_words[..len - 1]
            .iter()
            .any(|w| w.ends_with(['.', ';', ':', ',']))
        {
            continue;
        }
        let mut parts: Vec<&str> = phrase_words[..len - 1].to_vec();
        parts.push(last);
        let candidate = parts.join(" ");
        if units.recognizes(&candidate) {
            return Some(Quantity { value_raw, unit_raw: candidate, end: i + len });
        }
    }
    None
}

/// Spans (first, last whitespace token) where any keyword phrase occurs.
fn keyword_spans(words: &[&str], keywords: &[String]) -> Vec<(usize, usize)> {
    let flat: Vec<(String, usize)> = words
        .iter()
        .enumerate()
        .flat_map(|(i, w)| raw_tokens(w).into_iter().map(move |t| (t, i)))
        .collect();
    let mut spans = Vec::new();
    for kw in keywords {
        let needle = raw_tokens(kw);
        if needle.is_empty() || needle.len() > flat.len() {
            continue;
        }
        for start in 0..=flat.len() - needle.len() {
            if needle.iter().zip(&flat[start..]).all(|(n, (t, _))| n == t) {
                spans.push((flat[start].1, flat[start + needle.len() - 1].1));
            }
        }
    }
    spans.sort_unstable();
    spans.dedup();
    spans
}

fn distance(span: (usize, usize), start: usize, end: usize) -> Option<usize> {
    if start > span.1 {
        Some(start - span.1)
    } else if end < span.0 {
        Some(span.0 - end)
    } else {
        None // overlaps the keyword itself
    }
}

fn analysis_oracle(user: &str) -> String {
    let units = UnitTable::global();
    let quantitative = field(user, "Disclosure type").eq_ignore_ascii_case("quantitative");
    let keywords = keyword_list(user);

    let mut first_hit: Option<(usize, String)> = None;
    let mut found: Option<(usize, Quantity)> = None;
    for block in blocks(user) {
        let words: Vec<&str> = block.text.split_whitespace().collect();
        let spans = keyword_spans(&words, &keywords);
        if spans.is_empty() {
            continue;
        }
        if first_hit.is_none() {
            let (a, b) = spans[0];
            first_hit = Some((block.index, words[a..=b].join(" ")));
        }
        if !quantitative || found.is_some() {
            continue;
        }
        let mut i = 0;
        while i < words.len() {
            if let Some(q) = quantity_at(&words, i, units) {
                let near = spans
                    .iter()
                    .filter_map(|&s| distance(s, i, q.end))
                    .any(|d| d <= VALUE_WINDOW);
                if near {
                    found = Some((block.index, q));
                    break;
                }
                i = q.end + 1;
            } else {
                i += 1;
            }
        }
    }

    let verdict = match (&first_hit, &found) {
        (None, _) => json!({
            "status": "not_disclosed",
            "value": null,
            "unit": null,
            "evidence_indices": [],
            "rationale": "None of the metric keywords occur in the evidence."
        }),
        (Some((idx, kw)), Some((vidx, q))) => json!({
            "status": "disclosed",
            "value": q.value_raw,
            "unit": q.unit_raw,
            "evidence_indices": [vidx],
            "rationale": format!("Evidence {idx} mentions \"{kw}\"; evidence {vidx} reports {} {}.", q.value_raw, q.unit_raw)
        }),
        (Some((idx, kw)), None) if quantitative => json!({
            "status": "partially_disclosed",
            "value": null,
            "unit": null,
            "evidence_indices": [idx],
            "rationale": format!("Evidence {idx} mentions \"{kw}\" but states no value with a recognizable unit.")
        }),
        (Some((idx, kw)), None) => json!({
            "status": "disclosed",
            "value": null,
            "unit": null,
            "evidence_indices": [idx],
            "rationale": format!("Evidence {idx} discusses \"{kw}\".")
        }),
    };
    verdict.to_string()
}

fn chat_oracle(user: &str) -> String {
    match blocks(user).into_iter().next() {
        Some(top) => format!(
            "According to the report (pages {}–{}): \"{}\" [SOURCE {}]",
            top.pages.0, top.pages.1, top.text, top.index
        ),
        None => "No relevant content found in the report.".to_string(),
    }
}
