//! Per-report indexes: BM25 keyword postings and dense segment vectors.

mod keyword;
mod persist;
mod vector;

use std::fs::File;
use std::io::BufReader;
use std::path::Path;

use thiserror::Error;

use crate::gateway::{GatewayError, ModelGateway};
use crate::ingest::{read_segments_jsonl, write_segments_jsonl, Segment, SegmentId};

pub use keyword::{bm25_idf, build_keyword_index, query_terms, search_keyword, KeywordIndex, BM25_B, BM25_K1};
pub use persist::{
    keyword_index_bytes, load_keyword_index, load_vector_index, read_vectors, save_keyword_index,
    save_vector_index, write_vectors, KEYWORD_INDEX_SCHEMA, VECTORS_MAGIC, VECTORS_VERSION,
};
pub use vector::{build_vector_index, search_semantic, text_hash, EmbeddingCache, VectorIndex, EMBED_BATCH};

pub const SEGMENTS_FILE: &str = "segments.jsonl";
pub const KEYWORD_FILE: &str = "keyword_index.json";
pub const VECTORS_FILE: &str = "vectors.bin";

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("cannot index an empty segment list")]
    Empty,
    #[error("embedding dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("embedding failed after {completed} completed embeddings: {source}")]
    Gateway {
        completed: usize,
        #[source]
        source: GatewayError,
    },
    #[error("index file error: {0}")]
    Format(String),
    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl IndexError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        IndexError::Io {
            path: path.display().to_string(),
            source,
        }
    }
}

/// Segments plus both indexes for one report.
#[derive(Debug, Clone)]
pub struct ReportIndexes {
    pub report_id: String,
    pub segments: Vec<Segment>,
    pub keyword: KeywordIndex,
    pub vector: VectorIndex,
}

impl ReportIndexes {
    pub fn build(
        report_id: &str,
        segments: Vec<Segment>,
        gateway: &dyn ModelGateway,
        cache: &EmbeddingCache,
    ) -> Result<Self, IndexError> {
        let keyword = build_keyword_index(report_id, &segments)?;
        let vector = build_vector_index(report_id, &segments, gateway, cache)?;
        Ok(Self {
            report_id: report_id.to_string(),
            segments,
            keyword,
            vector,
        })
    }

    pub fn segment(&self, id: &SegmentId) -> Option<&Segment> {
        self.segments
            .get(id.seq)
            .filter(|s| &s.segment_id == id)
            .or_else(|| self.segments.iter().find(|s| &s.segment_id == id))
    }

    pub fn save(&self, dir: &Path) -> Result<(), IndexError> {
        std::fs::create_dir_all(dir).map_err(|e| IndexError::io(dir, e))?;
        let seg_path = dir.join(SEGMENTS_FILE);
        let mut buf = Vec::new();
        write_segments_jsonl(&mut buf, &self.report_id, &self.segments).map_err(|e| IndexError::io(&seg_path, e))?;
        std::fs::write(&seg_path, buf).map_err(|e| IndexError::io(&seg_path, e))?;
        save_keyword_index(&dir.join(KEYWORD_FILE), &self.keyword)?;
        save_vector_index(&dir.join(VECTORS_FILE), &self.vector)
    }

    pub fn load(dir: &Path) -> Result<Self, IndexError> {
        let seg_path = dir.join(SEGMENTS_FILE);
        let file = File::open(&seg_path).map_err(|e| IndexError::io(&seg_path, e))?;
        let (report_id, segments) =
            read_segments_jsonl(BufReader::new(file)).map_err(|e| IndexError::Format(e.to_string()))?;
        let keyword = load_keyword_index(&dir.join(KEYWORD_FILE))?;
        let vector = load_vector_index(&dir.join(VECTORS_FILE))?;
        if keyword.report_id != report_id || vector.report_id != report_id {
            return Err(IndexError::Format(format!("index files in {} disagree on report id", dir.display())));
        }
        if vector.ids.len() != segments.len() {
            return Err(IndexError::Format("vector count differs from segment count".into()));
        }
        Ok(Self {
            report_id,
            segments,
            keyword,
            vector,
        })
    }
}
