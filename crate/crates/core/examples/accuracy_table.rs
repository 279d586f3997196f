//! Accuracy tables: the fixture run scored against its ground truth, and the
//! published per-pair accuracies of five model backends re-aggregated.
//!
//!     cargo run --example accuracy_table -- [text|csv|markdown]

use std::path::PathBuf;

use euleresg::analysis::{analyze_report, AnalysisConfig};
use euleresg::catalog::Catalog;
use euleresg::eval::{aggregate, evaluate, load_ground_truth, render_table, PairAccuracy, TableFormat};
use euleresg::gateway::MockGateway;
use euleresg::index::{EmbeddingCache, ReportIndexes};
use euleresg::ingest::{extract_pages, segment_document, IngestOptions, PdftotextExtractor, ReportFormat};

const PAIRS: [(&str, &str, &str); 12] = [
    ("BMW", "Transportation", "Auto Parts"),
    ("BMW", "Transportation", "Automobiles"),
    ("BMW", "Transportation", "Car Rental and Leasing"),
    ("MCG", "Financials", "Asset Manage Custody Activity"),
    ("MCG", "Financials", "Commercial Banks"),
    ("MCG", "Financials", "Investment Banking Brokerage"),
    ("P&G", "Consumer Goods", "E-Commerce"),
    ("P&G", "Consumer Goods", "Household Personal Products"),
    ("P&G", "Consumer Goods", "Multiline and Specialty Retaile"),
    ("DELL", "Technology & Communications", "Hardware"),
    ("DELL", "Technology & Communications", "Internet Media & Services"),
    ("DELL", "Technology & Communications", "Telecommunication Services"),
];

const PUBLISHED: [(&str, [f64; 12]); 5] = [
    ("Claude", [0.80, 0.75, 0.86, 0.93, 1.00, 1.00, 1.00, 1.00, 1.00, 0.92, 1.00, 0.93]),
    ("DeepSeek", [0.87, 0.50, 0.86, 1.00, 1.00, 1.00, 1.00, 1.00, 1.00, 0.75, 1.00, 0.93]),
    ("GPT5", [0.87, 0.75, 0.86, 1.00, 1.00, 1.00, 1.00, 1.00, 1.00, 0.92, 1.00, 0.97]),
    ("QWen", [0.87, 0.80, 0.86, 1.00, 1.00, 1.00, 1.00, 1.00, 1.00, 0.75, 0.96, 0.97]),
    ("Gemini", [0.87, 0.75, 0.86, 1.00, 1.00, 1.00, 1.00, 1.00, 1.00, 0.92, 0.96, 0.97]),
];

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let format: TableFormat = std::env::args().nth(1).as_deref().unwrap_or("markdown").parse()?;
    let root = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures");

    let catalog = Catalog::load(root.join("catalog/sasb_fixture.json"))?;
    let bytes = std::fs::read(root.join("reports/northwind_2024.json"))?;
    let doc = extract_pages(&bytes, ReportFormat::Pagestream, &IngestOptions::default(), &PdftotextExtractor::default())?;
    let gateway = MockGateway::new();
    let indexes = ReportIndexes::build(&doc.report_id, segment_document(&doc), &gateway, &EmbeddingCache::new())?;
    let slugs: Vec<String> = catalog.sub_industries.iter().map(|s| s.slug.clone()).collect();
    let results = analyze_report(&catalog, &slugs, &doc.company, &indexes, &gateway, &AnalysisConfig::default())?;
    let ground_truth = load_ground_truth(&root.join("ground_truth/northwind_2024.csv"))?;
    let fixture = evaluate(&catalog, &[results], &ground_truth, "mock")?;
    println!("Fixture report\n\n{}", render_table(&[fixture], format));

    let mut reports = Vec::new();
    for (model, accs) in PUBLISHED {
        let pairs = PAIRS
            .iter()
            .zip(accs)
            .map(|(&(c, i, s), a)| PairAccuracy::published(c, i, s, a))
            .collect();
        reports.push(aggregate(model, pairs, Vec::new())?);
    }
    println!("\nPublished pair accuracies, re-aggregated\n\n{}", render_table(&reports, format));
    Ok(())
}
