use std::collections::HashMap;
use std::path::Path;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::IndexError;
use crate::gateway::{cosine, ModelGateway};
use crate::ingest::{Segment, SegmentId};
use crate::text::short_hash;

/// Texts sent per embedding call.
pub const EMBED_BATCH: usize = 64;

/// Dense vectors for one report's segments, all from one embedding model.
#[derive(Debug, Clone, PartialEq)]
pub struct VectorIndex {
    pub report_id: String,
    pub model_id: String,
    pub dim: usize,
    pub ids: Vec<SegmentId>,
    /// Row-major, `ids.len() * dim` values.
    pub values: Vec<f64>,
}

impl VectorIndex {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn vector(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn get(&self, id: &SegmentId) -> Option<&[f64]> {
        self.ids.iter().position(|x| x == id).map(|i| self.vector(i))
    }
}

/// Embeddings keyed by (model id, text hash), shared across reports so that
/// re-ingesting a report costs no embedding calls.
#[derive(Debug, Default)]
pub struct EmbeddingCache {
    entries: Mutex<HashMap<(String, String), Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct CacheFile {
    schema: String,
    entries: Vec<CacheEntry>,
}

#[derive(Serialize, Deserialize)]
struct CacheEntry {
    model_id: String,
    text_hash: String,
    values: Vec<f64>,
}

const CACHE_SCHEMA: &str = "euleresg/embedding-cache/v1";

pub fn text_hash(text: &str) -> String {
    short_hash(text.as_bytes(), 32)
}

impl EmbeddingCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, model_id: &str, text: &str) -> Option<Vec<f64>> {
        self.entries
            .lock()
            .unwrap()
            .get(&(model_id.to_string(), text_hash(text)))
            .cloned()
    }

    pub fn insert(&self, model_id: &str, text: &str, values: Vec<f64>) {
        self.entries
            .lock()
            .unwrap()
            .insert((model_id.to_string(), text_hash(text)), values);
    }

    pub fn load(path: &Path) -> Result<Self, IndexError> {
        let raw = std::fs::read(path).map_err(|e| IndexError::io(path, e))?;
        let file: CacheFile = serde_json::from_slice(&raw).map_err(|e| IndexError::Format(e.to_string()))?;
        if file.schema != CACHE_SCHEMA {
            return Err(IndexError::Format(format!("unexpected cache schema {}", file.schema)));
        }
        let cache = Self::new();
        {
            let mut map = cache.entries.lock().unwrap();
            for e in file.entries {
                map.insert((e.model_id, e.text_hash), e.values);
            }
        }
        Ok(cache)
    }

    pub fn save(&self, path: &Path) -> Result<(), IndexError> {
        let map = self.entries.lock().unwrap();
        let mut entries: Vec<CacheEntry> = map
            .iter()
            .map(|((m, h), v)| CacheEntry {
                model_id: m.clone(),
                text_hash: h.clone(),
                values: v.clone(),
            })
            .collect();
        entries.sort_by(|a, b| (&a.model_id, &a.text_hash).cmp(&(&b.model_id, &b.text_hash)));
        let file = CacheFile {
            schema: CACHE_SCHEMA.to_string(),
            entries,
        };
        let raw = serde_json::to_vec(&file).map_err(|e| IndexError::Format(e.to_string()))?;
        std::fs::write(path, raw).map_err(|e| IndexError::io(path, e))
    }
}

/// Embed every segment (cache first, then the gateway in batches).
pub fn build_vector_index(
    report_id: &str,
    segments: &[Segment],
    gateway: &dyn ModelGateway,
    cache: &EmbeddingCache,
) -> Result<VectorIndex, IndexError> {
    if segments.is_empty() {
        return Err(IndexError::Empty);
    }
    let model_id = gateway.embed_model_id();
    let mut vectors: Vec<Option<Vec<f64>>> = segments.iter().map(|s| cache.get(&model_id, &s.text)).collect();

    let mut missing: Vec<String> = Vec::new();
    for (s, v) in segments.iter().zip(&vectors) {
        if v.is_none() && !missing.contains(&s.text) {
            missing.push(s.text.clone());
        }
    }
    let mut completed = 0;
    for batch in missing.chunks(EMBED_BATCH) {
        let out = gateway
            .embed_texts(batch)
            .map_err(|source| IndexError::Gateway { completed, source })?;
        if out.len() != batch.len() {
            return Err(IndexError::Format(format!(
                "gateway returned {} embeddings for {} texts",
                out.len(),
                batch.len()
            )));
        }
        for (text, e) in batch.iter().zip(out) {
            cache.insert(&model_id, text, e.values);
        }
        completed += batch.len();
    }
    for (s, v) in segments.iter().zip(vectors.iter_mut()) {
        if v.is_none() {
            *v = cache.get(&model_id, &s.text);
        }
    }

    let dim = vectors[0].as_ref().map_or(0, Vec::len);
    let mut values = Vec::with_capacity(dim * segments.len());
    for v in vectors {
        let v = v.expect("every segment embedded");
        if v.len() != dim {
            return Err(IndexError::DimMismatch { expected: dim, found: v.len() });
        }
        values.extend(v);
    }
    Ok(VectorIndex {
        report_id: report_id.to_string(),
        model_id,
        dim,
        ids: segments.iter().map(|s| s.segment_id.clone()).collect(),
        values,
    })
}

/// Exhaustive cosine top-k, descending; ties go to the lower segment id.
pub fn search_semantic(index: &VectorIndex, query: &[f64], k: usize) -> Result<Vec<(SegmentId, f64)>, IndexError> {
    if query.len() != index.dim {
        return Err(IndexError::DimMismatch {
            expected: index.dim,
            found: query.len(),
        });
    }
    let mut ranked: Vec<(SegmentId, f64)> = index
        .ids
        .iter()
        .enumerate()
        .map(|(i, id)| (id.clone(), cosine(query, index.vector(i))))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(ranked)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gateway::{FailingGateway, MockGateway, MOCK_EMBED_DIM};
    use crate::ingest::BlockKind;

    fn segs(texts: &[&str]) -> Vec<Segment> {
        texts
            .iter()
            .enumerate()
            .map(|(i, t)| Segment {
                segment_id: SegmentId::new("r", i),
                kind: BlockKind::Paragraph,
                text: t.to_string(),
                page_start: 1,
                page_end: 1,
                char_start: 0,
                char_end: t.len(),
            })
            .collect()
    }

    #[test]
    fn builds_one_entry_per_segment_and_caches() {
        let gw = MockGateway::new();
        let cache = EmbeddingCache::new();
        let s = segs(&["energy use", "water", "energy use", "board", "waste"]);
        let idx = build_vector_index("r", &s, &gw, &cache).unwrap();
        assert_eq!(idx.len(), 5);
        assert_eq!(idx.dim, MOCK_EMBED_DIM);
        assert_eq!(idx.vector(0), idx.vector(2));
        assert_eq!(gw.embed_calls(), 1);
        build_vector_index("r", &s, &gw, &cache).unwrap();
        assert_eq!(gw.embed_calls(), 1);
    }

    #[test]
    fn gateway_failure_reports_progress() {
        let err = build_vector_index("r", &segs(&["a b"]), &FailingGateway, &EmbeddingCache::new()).unwrap_err();
        assert!(matches!(err, IndexError::Gateway { completed: 0, .. }));
    }

    #[test]
    fn self_query_ranks_first_and_k_caps() {
        let gw = MockGateway::new();
        let s = segs(&["energy use", "water withdrawn", "board diversity"]);
        let idx = build_vector_index("r", &s, &gw, &EmbeddingCache::new()).unwrap();
        let q = idx.vector(1).to_vec();
        let hits = search_semantic(&idx, &q, 10).unwrap();
        assert_eq!(hits.len(), 3);
        assert_eq!(hits[0].0, SegmentId::new("r", 1));
        assert!((hits[0].1 - 1.0).abs() < 1e-9);
        assert_eq!(search_semantic(&idx, &q, 2).unwrap().len(), 2);
        assert!(matches!(search_semantic(&idx, &[1.0], 2), Err(IndexError::DimMismatch { .. })));
    }

    #[test]
    fn cache_round_trips_through_disk() {
        let cache = EmbeddingCache::new();
        cache.insert("m", "text", vec![0.5, -0.25]);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.json");
        cache.save(&path).unwrap();
        let back = EmbeddingCache::load(&path).unwrap();
        assert_eq!(back.get("m", "text"), Some(vec![0.5, -0.25]));
        assert_eq!(back.get("other", "text"), None);
    }
}
