//! Directory-tree persistence:
//!
//! ```text
//! <root>/reports/<report_id>/report.json
//! <root>/reports/<report_id>/source.<pdf|json>
//! <root>/indexes/<report_id>/{segments.jsonl, keyword_index.json, vectors.bin}
//! <root>/indexes/embedding_cache.json
//! <root>/results/<name>.json
//! <root>/jobs.json
//! ```

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::analysis::AnalysisResults;
use crate::gateway::ModelGateway;
use crate::index::{EmbeddingCache, ReportIndexes};
use crate::ingest::{extract_pages, segment_document, IngestOptions, PdfTextExtractor, ReportDocument, ReportFormat};
use crate::{Error, Result};

pub const REPORT_SCHEMA: &str = "euleresg/report/v1";

#[derive(Serialize, Deserialize)]
struct ReportFile {
    schema: String,
    #[serde(flatten)]
    report: ReportDocument,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IngestOutcome {
    pub report_id: String,
    pub company: String,
    pub title: String,
    pub pages: usize,
    pub segments: usize,
    /// True when these bytes had been ingested before and nothing was written.
    pub already_present: bool,
}

#[derive(Debug, Clone)]
pub struct Store {
    root: PathBuf,
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    std::fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

fn valid_id(id: &str) -> bool {
    !id.is_empty() && id.len() <= 64 && id.chars().all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_')
}

impl Store {
    pub fn open(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        for sub in ["reports", "indexes", "results"] {
            let d = root.join(sub);
            std::fs::create_dir_all(&d).map_err(|e| Error::io(&d, e))?;
        }
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn report_dir(&self, id: &str) -> PathBuf {
        self.root.join("reports").join(id)
    }

    pub fn index_dir(&self, id: &str) -> PathBuf {
        self.root.join("indexes").join(id)
    }

    pub fn jobs_path(&self) -> PathBuf {
        self.root.join("jobs.json")
    }

    pub fn embedding_cache_path(&self) -> PathBuf {
        self.root.join("indexes").join("embedding_cache.json")
    }

    pub fn results_path(&self, name: &str) -> PathBuf {
        self.root.join("results").join(format!("{name}.json"))
    }

    pub fn has_report(&self, id: &str) -> bool {
        valid_id(id) && self.report_dir(id).join("report.json").is_file() && self.index_dir(id).join(crate::index::VECTORS_FILE).is_file()
    }

    /// The shared embedding cache, loaded from disk when present.
    pub fn load_embedding_cache(&self) -> EmbeddingCache {
        EmbeddingCache::load(&self.embedding_cache_path()).unwrap_or_default()
    }

    /// Ingest, segment and index a report. Identical bytes map to the same
    /// report id and are stored once.
    pub fn ingest_bytes(
        &self,
        bytes: &[u8],
        format: ReportFormat,
        options: &IngestOptions,
        pdf: &dyn PdfTextExtractor,
        gateway: &dyn ModelGateway,
        cache: &EmbeddingCache,
    ) -> Result<IngestOutcome> {
        let report_id = crate::ingest::report_id_for(bytes);
        if self.has_report(&report_id) {
            let report = self.load_report(&report_id)?;
            let indexes = self.load_indexes(&report_id)?;
            return Ok(IngestOutcome {
                report_id,
                company: report.company,
                title: report.title,
                pages: report.pages.len(),
                segments: indexes.segments.len(),
                already_present: true,
            });
        }
        let doc = extract_pages(bytes, format, options, pdf)?;
        let segments = segment_document(&doc);
        let indexes = ReportIndexes::build(&doc.report_id, segments, gateway, cache)?;

        let dir = self.report_dir(&report_id);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
        let ext = match format {
            ReportFormat::Pdf => "pdf",
            ReportFormat::Pagestream => "json",
        };
        write_atomic(&dir.join(format!("source.{ext}")), bytes)?;
        indexes.save(&self.index_dir(&report_id))?;
        let _ = cache.save(&self.embedding_cache_path());
        let file = ReportFile {
            schema: REPORT_SCHEMA.to_string(),
            report: doc.clone(),
        };
        // report.json last: its presence marks a complete ingestion.
        write_atomic(&dir.join("report.json"), &serde_json::to_vec_pretty(&file)?)?;
        Ok(IngestOutcome {
            report_id,
            company: doc.company,
            title: doc.title,
            pages: doc.pages.len(),
            segments: indexes.segments.len(),
            already_present: false,
        })
    }

    pub fn load_report(&self, id: &str) -> Result<ReportDocument> {
        if !valid_id(id) {
            return Err(Error::NotFound(format!("report {id}")));
        }
        let path = self.report_dir(id).join("report.json");
        let raw = std::fs::read(&path).map_err(|_| Error::NotFound(format!("report {id}")))?;
        let file: ReportFile = serde_json::from_slice(&raw)?;
        if file.schema != REPORT_SCHEMA {
            return Err(Error::Invalid(format!("{} has schema {}", path.display(), file.schema)));
        }
        Ok(file.report)
    }

    pub fn load_indexes(&self, id: &str) -> Result<ReportIndexes> {
        if !valid_id(id) {
            return Err(Error::NotFound(format!("report {id}")));
        }
        Ok(ReportIndexes::load(&self.index_dir(id))?)
    }

    pub fn save_results(&self, name: &str, results: &AnalysisResults) -> Result<PathBuf> {
        let path = self.results_path(name);
        write_atomic(&path, results.to_json_pretty().as_bytes())?;
        Ok(path)
    }

    pub fn load_results(&self, name: &str) -> Result<AnalysisResults> {
        if !valid_id(name) {
            return Err(Error::NotFound(format!("results {name}")));
        }
        let path = self.results_path(name);
        let raw = std::fs::read(&path).map_err(|_| Error::NotFound(format!("results {name}")))?;
        Ok(serde_json::from_slice(&raw)?)
    }

    pub fn write_jobs(&self, bytes: &[u8]) -> Result<()> {
        write_atomic(&self.jobs_path(), bytes)
    }
}
