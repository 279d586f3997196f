//! Analyze the fixture report while a share of model calls fail, and compare
//! against a clean run.
//!
//!     cargo run --example fault_injection -- [failure_rate] [seed]

use std::path::PathBuf;
use std::sync::Arc;

use euleresg::analysis::{analyze_report, AnalysisConfig};
use euleresg::catalog::Catalog;
use euleresg::gateway::{FaultInjectingGateway, MockGateway};
use euleresg::index::{EmbeddingCache, ReportIndexes};
use euleresg::ingest::{extract_pages, segment_document, IngestOptions, PdftotextExtractor, ReportFormat};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let rate: f64 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(0.3);
    let seed: u64 = args.next().map(|a| a.parse()).transpose()?.unwrap_or(1);

    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");
    let catalog = Catalog::load(root.join("catalog/sasb_fixture.json"))?;
    let bytes = std::fs::read(root.join("reports/northwind_2024.json"))?;
    let doc = extract_pages(&bytes, ReportFormat::Pagestream, &IngestOptions::default(), &PdftotextExtractor::default())?;
    let mock = Arc::new(MockGateway::new());
    let indexes = ReportIndexes::build(&doc.report_id, segment_document(&doc), mock.as_ref(), &EmbeddingCache::new())?;
    let slugs: Vec<String> = catalog.sub_industries.iter().map(|s| s.slug.clone()).collect();
    let cfg = AnalysisConfig {
        parallelism: 1,
        ..AnalysisConfig::default()
    };

    let clean = analyze_report(&catalog, &slugs, &doc.company, &indexes, mock.as_ref(), &cfg)?;
    let faulty = FaultInjectingGateway::new(mock, rate, seed);
    let noisy = analyze_report(&catalog, &slugs, &doc.company, &indexes, &faulty, &cfg)?;
    println!("failure rate {rate}, seed {seed}: {} of {} calls failed\n", faulty.failures(), faulty.calls());

    let mut degraded = 0;
    for ((_, a), (_, b)) in clean.assessments().zip(noisy.assessments()) {
        let note = if b.degraded {
            degraded += 1;
            format!("degraded: {}", b.rationale)
        } else if a.status == b.status && a.extracted == b.extracted {
            "same as clean run".to_string()
        } else {
            "differs from clean run".to_string()
        };
        println!("{:<14} {:<20} {:<20} {note}", a.metric_code, a.status.as_str(), b.status.as_str());
    }
    println!("\n{degraded} degraded assessments");
    Ok(())
}
