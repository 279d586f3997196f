//! Analyze the fixture report for every sub-industry in the catalog.
//!
//!     cargo run --example analyze_report -- [--json]

use std::path::PathBuf;

use euleresg::analysis::{analyze_report, AnalysisConfig};
use euleresg::catalog::Catalog;
use euleresg::gateway::MockGateway;
use euleresg::index::{EmbeddingCache, ReportIndexes};
use euleresg::ingest::{extract_pages, segment_document, IngestOptions, PdftotextExtractor, ReportFormat};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let catalog = Catalog::load(root.join("catalog/sasb_fixture.json"))?;
    let bytes = std::fs::read(root.join("reports/northwind_2024.json"))?;
    let doc = extract_pages(&bytes, ReportFormat::Pagestream, &IngestOptions::default(), &PdftotextExtractor::default())?;
    let gateway = MockGateway::new();
    let indexes = ReportIndexes::build(&doc.report_id, segment_document(&doc), &gateway, &EmbeddingCache::new())?;

    let slugs: Vec<String> = catalog.sub_industries.iter().map(|s| s.slug.clone()).collect();
    let results = analyze_report(&catalog, &slugs, &doc.company, &indexes, &gateway, &AnalysisConfig::default())?;
    if std::env::args().any(|a| a == "--json") {
        println!("{}", results.to_json_pretty());
        return Ok(());
    }

    for (slug, a) in results.assessments() {
        let value = a
            .extracted
            .as_ref()
            .map(|v| format!("{} -> {} {}", v.raw_text, v.value_normalized, v.unit_canonical))
            .unwrap_or_default();
        let pages: Vec<String> = a.evidence.iter().map(|e| e.page_start.to_string()).collect();
        println!("{slug:<22} {:<14} {:<20} pages [{}] {value}", a.metric_code, a.status.as_str(), pages.join(","));
    }
    for (status, n) in results.status_counts(None) {
        println!("{:>20}: {n}", status.as_str());
    }
    println!("runtime {} ms", results.runtime_ms);
    Ok(())
}
