//! Report ingestion: bytes → pages → merged blocks → segments.
//!
//! Two input formats are accepted. `pagestream` is a JSON document of pages
//! with typed blocks and is taken verbatim. `pdf` goes through a
//! [`PdfTextExtractor`] and a layout heuristic that splits page text into
//! paragraph, table and heading blocks.

mod merge;
mod pdf;
mod segment;

use std::fmt;
use std::str::FromStr;

use chrono::{DateTime, Utc};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::text;

pub use merge::{merge_cross_page_structures, MergedBlock};
pub use pdf::{blocks_from_page_text, FixedPagesExtractor, PdfTextExtractor, PdftotextExtractor};
pub use segment::{
    read_segments_jsonl, segment_document, write_segments_jsonl, Segment, SegmentId,
    MIN_SEGMENT_CHARS, SEGMENTS_SCHEMA,
};

#[derive(Debug, Error)]
pub enum IngestError {
    #[error("report has no pages")]
    NoPages,
    #[error("pagestream schema violation at {field}: {message}")]
    Schema { field: String, message: String },
    #[error("unreadable PDF{}: {message}", page.map(|p| format!(" (page {p})")).unwrap_or_default())]
    Pdf { page: Option<usize>, message: String },
    #[error("unsupported report format {0:?}; expected \"pdf\" or \"pagestream\"")]
    UnsupportedFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Pdf,
    Pagestream,
}

impl FromStr for ReportFormat {
    type Err = IngestError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pdf" => Ok(ReportFormat::Pdf),
            "pagestream" | "json" => Ok(ReportFormat::Pagestream),
            other => Err(IngestError::UnsupportedFormat(other.to_string())),
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ReportFormat::Pdf => "pdf",
            ReportFormat::Pagestream => "pagestream",
        })
    }
}

impl ReportFormat {
    /// Guess from a file name; anything not ending in `.pdf` is a pagestream.
    pub fn from_path(path: &std::path::Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some(ext) if ext.eq_ignore_ascii_case("pdf") => ReportFormat::Pdf,
            _ => ReportFormat::Pagestream,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BlockKind {
    Paragraph,
    Table,
    Heading,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RawBlock {
    pub kind: BlockKind,
    pub text: String,
    #[serde(default)]
    pub continues: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Page {
    pub number: u32,
    pub text: String,
    pub blocks: Vec<RawBlock>,
}

impl Page {
    /// Build a page; its text is the block texts joined by single newlines.
    pub fn new(number: u32, blocks: Vec<RawBlock>) -> Self {
        let text = blocks
            .iter()
            .map(|b| b.text.as_str())
            .collect::<Vec<_>>()
            .join("\n");
        Page {
            number,
            text,
            blocks,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportDocument {
    pub report_id: String,
    pub company: String,
    pub title: String,
    pub format: ReportFormat,
    pub pages: Vec<Page>,
    pub ingested_at: DateTime<Utc>,
}

impl ReportDocument {
    pub fn page(&self, number: u32) -> Option<&Page> {
        self.pages.iter().find(|p| p.number == number)
    }
}

/// Metadata for formats that do not carry it (PDF).
#[derive(Debug, Clone, Default)]
pub struct IngestOptions {
    pub company: Option<String>,
    pub title: Option<String>,
}

/// Stable report id: first 16 hex chars of the SHA-256 of the file bytes.
pub fn report_id_for(bytes: &[u8]) -> String {
    text::short_hash(bytes, 16)
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PagestreamFile {
    company: String,
    title: String,
    pages: Vec<PagestreamPage>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PagestreamPage {
    number: u32,
    blocks: Vec<RawBlock>,
}

fn schema_error(e: serde_json::Error) -> IngestError {
    let message = e.to_string();
    // serde names the offending field in backticks; surface it as the field.
    let field = message
        .split('`')
        .nth(1)
        .map(str::to_string)
        .unwrap_or_else(|| format!("line {} column {}", e.line(), e.column()));
    IngestError::Schema { field, message }
}

/// Parse a pagestream document. Block texts are kept byte-for-byte.
pub fn parse_pagestream(bytes: &[u8]) -> Result<(String, String, Vec<Page>), IngestError> {
    let file: PagestreamFile = serde_json::from_slice(bytes).map_err(schema_error)?;
    if file.pages.is_empty() {
        return Err(IngestError::NoPages);
    }
    let mut pages = Vec::with_capacity(file.pages.len());
    for (i, p) in file.pages.into_iter().enumerate() {
        let expected = i as u32 + 1;
        if p.number != expected {
            return Err(IngestError::Schema {
                field: format!("pages[{i}].number"),
                message: format!("expected page {expected}, found {}", p.number),
            });
        }
        pages.push(Page::new(p.number, p.blocks));
    }
    Ok((file.company, file.title, pages))
}

/// Read a report into pages.
pub fn extract_pages(
    bytes: &[u8],
    format: ReportFormat,
    options: &IngestOptions,
    pdf: &dyn PdfTextExtractor,
) -> Result<ReportDocument, IngestError> {
    let report_id = report_id_for(bytes);
    let (company, title, pages) = match format {
        ReportFormat::Pagestream => {
            let (company, title, pages) = parse_pagestream(bytes)?;
            (
                options.company.clone().unwrap_or(company),
                options.title.clone().unwrap_or(title),
                pages,
            )
        }
        ReportFormat::Pdf => {
            let texts = pdf.extract_page_texts(bytes)?;
            if texts.is_empty() {
                return Err(IngestError::NoPages);
            }
            let pages = texts
                .iter()
                .enumerate()
                .map(|(i, t)| Page::new(i as u32 + 1, blocks_from_page_text(t)))
                .collect();
            (
                options.company.clone().unwrap_or_else(|| "Unknown company".into()),
                options.title.clone().unwrap_or_else(|| format!("Report {report_id}")),
                pages,
            )
        }
    };
    Ok(ReportDocument {
        report_id,
        company,
        title,
        format,
        pages,
        ingested_at: Utc::now(),
    })
}
