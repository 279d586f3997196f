//! Load the metric catalog and show the semantic query text each metric gets.
//!
//!     cargo run --example catalog_expansion -- [catalog.json]

use std::path::PathBuf;

use euleresg::catalog::{expand_metric_definition, Catalog};
use euleresg::gateway::MockGateway;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let path = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/catalog/sasb_fixture.json"));
    let catalog = Catalog::load(&path)?;
    let gateway = MockGateway::new();
    println!("{} metrics in {} sub-industries", catalog.metric_count(), catalog.sub_industries.len());

    for si in &catalog.sub_industries {
        println!("\n{} / {} ({})", si.industry, si.sub_industry, si.slug);
        for m in catalog.list_metrics_for(&si.slug)? {
            let e = expand_metric_definition(m, &gateway);
            let preview: String = e.expansion_text.chars().take(90).collect();
            println!("  {:<14} {:<13} {:?}", m.code, format!("{:?}", e.expansion_source), preview);
            println!("  {:<14} keywords: {}", "", m.keywords.join(", "));
        }
    }
    Ok(())
}
