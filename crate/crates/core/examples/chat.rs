//! Grounded question answering over the fixture report.
//!
//!     cargo run --example chat -- "How much water was withdrawn?" "TC-SI-130a.1"

use std::path::PathBuf;

use euleresg::analysis::{analyze_report, AnalysisConfig};
use euleresg::catalog::Catalog;
use euleresg::gateway::MockGateway;
use euleresg::index::{EmbeddingCache, ReportIndexes};
use euleresg::ingest::{extract_pages, segment_document, IngestOptions, PdftotextExtractor, ReportFormat};
use euleresg::service::chat::chat_answer;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut questions: Vec<String> = std::env::args().skip(1).collect();
    if questions.is_empty() {
        questions = vec![
            "How much water was withdrawn for cooling?".into(),
            "Is there a whistleblower hotline?".into(),
            "What does TC-SI-130a.1 report?".into(),
            "Do they breed alpacas?".into(),
        ];
    }
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let catalog = Catalog::load(root.join("catalog/sasb_fixture.json"))?;
    let bytes = std::fs::read(root.join("reports/northwind_2024.json"))?;
    let doc = extract_pages(&bytes, ReportFormat::Pagestream, &IngestOptions::default(), &PdftotextExtractor::default())?;
    let gateway = MockGateway::new();
    let indexes = ReportIndexes::build(&doc.report_id, segment_document(&doc), &gateway, &EmbeddingCache::new())?;
    let cfg = AnalysisConfig::default();
    let slugs: Vec<String> = catalog.sub_industries.iter().map(|s| s.slug.clone()).collect();
    let results = analyze_report(&catalog, &slugs, &doc.company, &indexes, &gateway, &cfg)?;

    for q in &questions {
        let answer = chat_answer(q, &catalog, &indexes, Some(&results), &gateway, &cfg.retrieval)?;
        println!("> {q}\n{}", answer.text);
        for c in &answer.citations {
            println!("  [{}] pages {}-{}", c.segment_id, c.page_start, c.page_end);
        }
        println!();
    }
    Ok(())
}
