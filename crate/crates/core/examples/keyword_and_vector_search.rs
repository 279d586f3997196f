//! Query the two indexes of the fixture report separately.
//!
//!     cargo run --example keyword_and_vector_search -- "water withdrawn for cooling"

use std::path::PathBuf;

use euleresg::gateway::{MockGateway, ModelGateway};
use euleresg::index::{query_terms, search_keyword, search_semantic, EmbeddingCache, ReportIndexes};
use euleresg::ingest::{extract_pages, segment_document, IngestOptions, PdftotextExtractor, ReportFormat};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let query = std::env::args().nth(1).unwrap_or_else(|| "water withdrawn for cooling".to_string());
    let path = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/reports/northwind_2024.json");
    let doc = extract_pages(&std::fs::read(path)?, ReportFormat::Pagestream, &IngestOptions::default(), &PdftotextExtractor::default())?;
    let gateway = MockGateway::new();
    let indexes = ReportIndexes::build(&doc.report_id, segment_document(&doc), &gateway, &EmbeddingCache::new())?;

    let terms = query_terms(&[query.as_str()]);
    println!("query terms: {terms:?}\n\nBM25");
    for (id, score) in search_keyword(&indexes.keyword, &terms, 5) {
        println!("  {score:>7.3}  {}", snippet(&indexes, &id));
    }

    let q = gateway.embed_texts(std::slice::from_ref(&query))?.remove(0);
    println!("\ncosine ({})", indexes.vector.model_id);
    for (id, score) in search_semantic(&indexes.vector, &q.values, 5)? {
        println!("  {score:>7.3}  {}", snippet(&indexes, &id));
    }
    Ok(())
}

fn snippet(indexes: &ReportIndexes, id: &euleresg::ingest::SegmentId) -> String {
    let text = &indexes.segment(id).expect("indexed segment").text;
    let flat = text.replace('\n', " / ");
    let short: String = flat.chars().take(80).collect();
    format!("#{} {short}", id.seq)
}
