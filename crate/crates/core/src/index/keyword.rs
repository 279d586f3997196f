use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::IndexError;
use crate::ingest::{Segment, SegmentId};
use crate::text::tokenize;

pub const BM25_K1: f64 = 1.2;
pub const BM25_B: f64 = 0.75;

/// Inverted index over one report's segments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KeywordIndex {
    pub report_id: String,
    /// term → (segment, term frequency), segments ascending.
    pub postings: BTreeMap<String, Vec<(SegmentId, u32)>>,
    pub doc_lengths: BTreeMap<SegmentId, usize>,
    pub avg_doc_length: f64,
    pub n: usize,
}

pub fn build_keyword_index(report_id: &str, segments: &[Segment]) -> Result<KeywordIndex, IndexError> {
    if segments.is_empty() {
        return Err(IndexError::Empty);
    }
    let mut postings: BTreeMap<String, BTreeMap<SegmentId, u32>> = BTreeMap::new();
    let mut doc_lengths = BTreeMap::new();
    for s in segments {
        let tokens = tokenize(&s.text);
        doc_lengths.insert(s.segment_id.clone(), tokens.len());
        for t in tokens {
            *postings
                .entry(t)
                .or_default()
                .entry(s.segment_id.clone())
                .or_insert(0) += 1;
        }
    }
    let total: usize = doc_lengths.values().sum();
    Ok(KeywordIndex {
        report_id: report_id.to_string(),
        postings: postings
            .into_iter()
            .map(|(t, docs)| (t, docs.into_iter().collect()))
            .collect(),
        avg_doc_length: total as f64 / doc_lengths.len() as f64,
        n: doc_lengths.len(),
        doc_lengths,
    })
}

pub fn bm25_idf(n: usize, df: usize) -> f64 {
    ((n as f64 - df as f64 + 0.5) / (df as f64 + 0.5) + 1.0).ln()
}

/// Tokenize and deduplicate query terms, keeping first-occurrence order.
pub fn query_terms<S: AsRef<str>>(terms: &[S]) -> Vec<String> {
    let mut out: Vec<String> = Vec::new();
    for t in terms.iter().flat_map(|t| tokenize(t.as_ref())) {
        if !out.contains(&t) {
            out.push(t);
        }
    }
    out
}

/// BM25 search. Query terms are run through the index tokenizer and
/// deduplicated. Zero scores are omitted; ties go to the lower segment id.
pub fn search_keyword<S: AsRef<str>>(index: &KeywordIndex, terms: &[S], top_k: usize) -> Vec<(SegmentId, f64)> {
    let mut scores: BTreeMap<&SegmentId, f64> = BTreeMap::new();
    let avgdl = if index.avg_doc_length > 0.0 { index.avg_doc_length } else { 1.0 };
    for term in query_terms(terms) {
        let Some(list) = index.postings.get(&term) else { continue };
        let idf = bm25_idf(index.n, list.len());
        for (id, tf) in list {
            let tf = f64::from(*tf);
            let dl = index.doc_lengths.get(id).copied().unwrap_or(0) as f64;
            let norm = BM25_K1 * (1.0 - BM25_B + BM25_B * dl / avgdl);
            *scores.entry(id).or_insert(0.0) += idf * tf * (BM25_K1 + 1.0) / (tf + norm);
        }
    }
    let mut ranked: Vec<(SegmentId, f64)> = scores
        .into_iter()
        .filter(|(_, s)| *s > 0.0)
        .map(|(id, s)| (id.clone(), s))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(top_k);
    ranked
}
