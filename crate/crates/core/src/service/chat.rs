//! Retrieval-grounded question answering over one report.

use std::collections::{HashMap, VecDeque};
use std::sync::{LazyLock, Mutex};

use regex::Regex;
use serde::{Deserialize, Serialize};

use crate::analysis::AnalysisResults;
use crate::catalog::Catalog;
use crate::gateway::{GatewayError, ModelGateway};
use crate::index::ReportIndexes;
use crate::ingest::SegmentId;
use crate::retrieval::{retrieve, RetrievalConfig, RetrievalQuery};

const CHAT_SYSTEM_PROMPT: &str = include_str!("../../prompts/chat_system.txt");

pub const NO_CONTENT_ANSWER: &str = "No relevant content found in the report.";

/// Reranked semantic score a segment needs to count as a hit on its own,
/// without a keyword match. Below it the similarity is too weak to ground
/// an answer.
pub const CHAT_SEMANTIC_MIN: f64 = 0.6;

/// Turns kept per session.
pub const SESSION_CAPACITY: usize = 50;

static METRIC_CODE: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"[A-Z]{2,3}-[A-Z]{2}-\d{3}[a-z]\.\d").unwrap());

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    User,
    Assistant,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Citation {
    pub segment_id: SegmentId,
    pub page_start: u32,
    pub page_end: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChatTurn {
    pub session_id: String,
    pub role: Role,
    pub text: String,
    pub citations: Vec<Citation>,
}

/// The text and citations of an assistant reply.
#[derive(Debug, Clone, PartialEq)]
pub struct ChatAnswer {
    pub text: String,
    pub citations: Vec<Citation>,
}

pub fn chat_system_prompt() -> &'static str {
    CHAT_SYSTEM_PROMPT
}

fn metric_answer(code: &str, catalog: &Catalog, results: Option<&AnalysisResults>) -> ChatAnswer {
    let Some(m) = catalog.find_metric(code) else {
        return ChatAnswer {
            text: format!("{code} is not a metric of the loaded catalog."),
            citations: Vec::new(),
        };
    };
    let unit = if m.unit.is_empty() { String::new() } else { format!(", unit {}", m.unit) };
    let mut text = format!(
        "{code} ({}): {}. Topic: {}. Type: {}{unit}. {}",
        m.sub_industry_slug, m.name, m.topic, m.disclosure_type, m.description
    );
    let mut citations = Vec::new();
    if let Some(a) = results.and_then(|r| r.find(code)) {
        text.push_str(&format!(" Assessment: {}", a.status));
        if let Some(v) = &a.extracted {
            text.push_str(&format!(", value {} {}", v.value_normalized, v.unit_canonical));
        }
        let pages: Vec<String> = a
            .evidence
            .iter()
            .map(|e| {
                if e.page_start == e.page_end {
                    e.page_start.to_string()
                } else {
                    format!("{}–{}", e.page_start, e.page_end)
                }
            })
            .collect();
        if !pages.is_empty() {
            text.push_str(&format!("; evidence on pages {}", pages.join(", ")));
        }
        text.push('.');
        citations = a
            .evidence
            .iter()
            .map(|e| Citation {
                segment_id: e.segment_id.clone(),
                page_start: e.page_start,
                page_end: e.page_end,
            })
            .collect();
    }
    ChatAnswer { text, citations }
}

static SOURCE_REF: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"\[SOURCE (\d+)\]").unwrap());

/// Answer one message.
///
/// A message naming a metric code is answered from the catalog and, when
/// available, that metric's assessment. Anything else goes through
/// dual-channel retrieval; only segments with a keyword hit or a strong
/// semantic score are passed to the model, and with none the fixed
/// [`NO_CONTENT_ANSWER`] is returned without a model call.
pub fn chat_answer(
    message: &str,
    catalog: &Catalog,
    indexes: &ReportIndexes,
    results: Option<&AnalysisResults>,
    gateway: &dyn ModelGateway,
    cfg: &RetrievalConfig,
) -> Result<ChatAnswer, GatewayError> {
    if let Some(code) = METRIC_CODE.find(message) {
        return Ok(metric_answer(code.as_str(), catalog, results));
    }
    let outcome = retrieve(&RetrievalQuery::for_message(message), indexes, gateway, cfg);
    let sources: Vec<_> = outcome
        .fused
        .iter()
        .filter(|f| f.keyword_norm.is_some() || f.semantic_norm.is_some_and(|s| s >= CHAT_SEMANTIC_MIN))
        .filter_map(|f| indexes.segment(&f.segment_id))
        .collect();
    if sources.is_empty() {
        return Ok(ChatAnswer {
            text: NO_CONTENT_ANSWER.to_string(),
            citations: Vec::new(),
        });
    }
    let mut user = format!("Question: {}\n\nSources:\n", message.trim());
    for (i, s) in sources.iter().enumerate() {
        if i > 0 {
            user.push('\n');
        }
        user.push_str(&format!("[SOURCE {} | pages {}–{}]\n{}\n", i + 1, s.page_start, s.page_end, s.text));
    }
    let reply = gateway.complete_chat(CHAT_SYSTEM_PROMPT, &user)?;

    let mut cited: Vec<usize> = SOURCE_REF
        .captures_iter(&reply.response_text)
        .filter_map(|c| c[1].parse::<usize>().ok())
        .filter(|n| (1..=sources.len()).contains(n))
        .collect();
    cited.dedup();
    if cited.is_empty() {
        cited = (1..=sources.len()).collect();
    }
    let citations = cited
        .into_iter()
        .map(|n| {
            let s = sources[n - 1];
            Citation {
                segment_id: s.segment_id.clone(),
                page_start: s.page_start,
                page_end: s.page_end,
            }
        })
        .collect();
    Ok(ChatAnswer {
        text: reply.response_text.trim().to_string(),
        citations,
    })
}

/// In-memory chat transcripts, each capped at [`SESSION_CAPACITY`] turns.
#[derive(Default)]
pub struct Sessions {
    inner: Mutex<HashMap<String, VecDeque<ChatTurn>>>,
}

impl Sessions {
    pub fn push(&self, turn: ChatTurn) {
        let mut map = self.inner.lock().unwrap();
        let log = map.entry(turn.session_id.clone()).or_default();
        log.push_back(turn);
        while log.len() > SESSION_CAPACITY {
            log.pop_front();
        }
    }

    pub fn transcript(&self, session_id: &str) -> Option<Vec<ChatTurn>> {
        self.inner
            .lock()
            .unwrap()
            .get(session_id)
            .map(|l| l.iter().cloned().collect())
    }
}
