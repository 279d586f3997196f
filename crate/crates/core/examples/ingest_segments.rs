//! Read a report (pagestream JSON or PDF) and print its segments.
//!
//!     cargo run --example ingest_segments -- [report.json|report.pdf]

use std::path::PathBuf;

use euleresg::ingest::{extract_pages, segment_document, IngestOptions, PdftotextExtractor, ReportFormat};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/reports/northwind_2024.json"));
    let bytes = std::fs::read(&path)?;
    let format = ReportFormat::from_path(&path);
    let doc = extract_pages(&bytes, format, &IngestOptions::default(), &PdftotextExtractor::default())?;
    println!("{} | {} | report {} | {} pages", doc.company, doc.title, doc.report_id, doc.pages.len());

    for s in segment_document(&doc) {
        let pages = if s.page_start == s.page_end {
            format!("p{}", s.page_start)
        } else {
            format!("p{}-{}", s.page_start, s.page_end)
        };
        println!("\n#{:<3} {:<9} {:?}", s.segment_id.seq, pages, s.kind);
        for line in s.text.lines() {
            println!("     {line}");
        }
    }
    Ok(())
}
