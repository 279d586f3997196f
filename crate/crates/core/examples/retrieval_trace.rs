//! Dual-channel retrieval for one metric, printed as the JSON trace.
//!
//!     cargo run --example retrieval_trace -- TC-HW-410a.4

use std::path::PathBuf;

use euleresg::catalog::{expand_metric_definition, Catalog};
use euleresg::gateway::MockGateway;
use euleresg::index::{EmbeddingCache, ReportIndexes};
use euleresg::ingest::{extract_pages, segment_document, IngestOptions, PdftotextExtractor, ReportFormat};
use euleresg::retrieval::{retrieve, trace_json, RetrievalConfig, RetrievalQuery};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let code = std::env::args().nth(1).unwrap_or_else(|| "TC-HW-410a.4".to_string());
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let catalog = Catalog::load(root.join("catalog/sasb_fixture.json"))?;
    let metric = catalog.find_metric(&code).ok_or_else(|| format!("unknown metric {code}"))?;

    let bytes = std::fs::read(root.join("reports/northwind_2024.json"))?;
    let doc = extract_pages(&bytes, ReportFormat::Pagestream, &IngestOptions::default(), &PdftotextExtractor::default())?;
    let gateway = MockGateway::new();
    let indexes = ReportIndexes::build(&doc.report_id, segment_document(&doc), &gateway, &EmbeddingCache::new())?;

    let cfg = RetrievalConfig::default();
    let expanded = expand_metric_definition(metric, &gateway);
    let query = RetrievalQuery::for_metric(&expanded);
    let outcome = retrieve(&query, &indexes, &gateway, &cfg);
    println!("{}", serde_json::to_string_pretty(&trace_json(&code, &query, &outcome))?);

    println!("\nselected evidence (w = {}):", cfg.rerank_weight);
    for f in &outcome.fused {
        let seg = indexes.segment(&f.segment_id).expect("indexed segment");
        println!(
            "  {:.3}  kw={:<6} sem={:<6} p{}-{}  {}",
            f.fused_score,
            f.keyword_norm.map_or("-".into(), |x| format!("{x:.3}")),
            f.semantic_norm.map_or("-".into(), |x| format!("{x:.3}")),
            seg.page_start,
            seg.page_end,
            seg.text.lines().next().unwrap_or_default()
        );
    }
    Ok(())
}
