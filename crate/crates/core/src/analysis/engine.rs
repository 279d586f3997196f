use std::time::Instant;

use chrono::{DateTime, Utc};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use tracing::{debug, warn};

use super::prompt::{build_analysis_prompt, EvidenceBlock};
use super::verdict::parse_structured_verdict;
use super::{DisclosureAssessment, DisclosureStatus, EvidenceRef};
use crate::catalog::{expand_metric_definition, Catalog, CatalogError, ExpandedMetric, MetricSpec};
use crate::gateway::ModelGateway;
use crate::index::ReportIndexes;
use crate::retrieval::{retrieve, trace_json, RetrievalConfig, RetrievalQuery};

pub const RESULTS_SCHEMA: &str = "euleresg/results/v1";

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnalysisConfig {
    pub retrieval: RetrievalConfig,
    /// Metrics analyzed concurrently.
    pub parallelism: usize,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            retrieval: RetrievalConfig::default(),
            parallelism: 4,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubIndustryResults {
    pub slug: String,
    pub assessments: Vec<DisclosureAssessment>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisResults {
    pub schema: String,
    pub report_id: String,
    pub company: String,
    pub framework: String,
    pub generated_at: DateTime<Utc>,
    pub sub_industries: Vec<SubIndustryResults>,
    pub runtime_ms: u64,
}

impl AnalysisResults {
    pub fn assessments(&self) -> impl Iterator<Item = (&str, &DisclosureAssessment)> {
        self.sub_industries
            .iter()
            .flat_map(|s| s.assessments.iter().map(move |a| (s.slug.as_str(), a)))
    }

    pub fn find(&self, metric_code: &str) -> Option<&DisclosureAssessment> {
        self.assessments().map(|(_, a)| a).find(|a| a.metric_code == metric_code)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("results serialize")
    }

    /// Serialized results without the run-dependent fields `generated_at`
    /// and `runtime_ms`. Two runs over the same inputs produce identical bytes.
    pub fn canonical_json(&self) -> String {
        let mut v = serde_json::to_value(self).expect("results serialize");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("generated_at");
            obj.remove("runtime_ms");
        }
        serde_json::to_string_pretty(&v).expect("results serialize")
    }

    pub fn status_counts(&self, slug: Option<&str>) -> [(DisclosureStatus, usize); 3] {
        DisclosureStatus::ALL.map(|s| {
            let n = self
                .assessments()
                .filter(|(sl, a)| slug.is_none_or(|want| want == *sl) && a.status == s)
                .count();
            (s, n)
        })
    }
}

fn degraded_assessment(metric: &MetricSpec, evidence: Vec<EvidenceRef>, latency_ms: u64, reason: String) -> DisclosureAssessment {
    DisclosureAssessment {
        metric_code: metric.code.clone(),
        status: DisclosureStatus::NotDisclosed,
        extracted: None,
        evidence,
        rationale: reason,
        degraded: true,
        latency_ms,
    }
}

/// Retrieve, prompt, classify one metric. Never fails: gateway errors and
/// unparseable replies yield a degraded `not_disclosed` assessment.
pub fn analyze_metric_traced(
    metric: &ExpandedMetric,
    indexes: &ReportIndexes,
    gateway: &dyn ModelGateway,
    cfg: &RetrievalConfig,
) -> (DisclosureAssessment, serde_json::Value) {
    let m = &metric.metric;
    let query = RetrievalQuery::for_metric(metric);
    let outcome = retrieve(&query, indexes, gateway, cfg);
    let trace = trace_json(&m.code, &query, &outcome);

    let mut evidence = Vec::new();
    let mut blocks = Vec::new();
    for f in &outcome.fused {
        let Some(seg) = indexes.segment(&f.segment_id) else { continue };
        evidence.push(EvidenceRef {
            segment_id: f.segment_id.clone(),
            page_start: seg.page_start,
            page_end: seg.page_end,
            fused_score: f.fused_score,
        });
        blocks.push(EvidenceBlock {
            page_start: seg.page_start,
            page_end: seg.page_end,
            text: &seg.text,
        });
    }
    let (system, user) = build_analysis_prompt(m, &blocks);

    let mut latency_ms = 0;
    let mut last_error = String::new();
    for attempt in 0..2 {
        let exchange = match gateway.complete_chat(&system, &user) {
            Ok(x) => x,
            Err(e) => {
                warn!(code = %m.code, error = %e, "analysis call failed");
                let reason = format!("analysis model call failed: {e}");
                return (degraded_assessment(m, evidence, latency_ms, reason), trace);
            }
        };
        latency_ms += exchange.latency_ms;
        match parse_structured_verdict(&exchange.response_text, m) {
            Ok(v) => {
                let mut rationale = v.rationale;
                if let Some(why) = &outcome.degraded {
                    rationale.push_str(&format!(" [keyword channel only: {why}]"));
                }
                let assessment = DisclosureAssessment {
                    metric_code: m.code.clone(),
                    status: v.status,
                    extracted: v.extracted,
                    evidence,
                    rationale,
                    degraded: outcome.degraded.is_some(),
                    latency_ms,
                };
                return (assessment, trace);
            }
            Err(e) => {
                debug!(code = %m.code, attempt, error = %e, "unparseable verdict");
                last_error = e.to_string();
            }
        }
    }
    let reason = format!("model reply unparseable after retry: {last_error}");
    (degraded_assessment(m, evidence, latency_ms, reason), trace)
}

pub fn analyze_metric(
    metric: &ExpandedMetric,
    indexes: &ReportIndexes,
    gateway: &dyn ModelGateway,
    cfg: &RetrievalConfig,
) -> DisclosureAssessment {
    analyze_metric_traced(metric, indexes, gateway, cfg).0
}

/// Expand every metric of the given sub-industries, in catalog order.
pub fn expand_all(
    catalog: &Catalog,
    slugs: &[String],
    gateway: &dyn ModelGateway,
) -> Result<Vec<(String, Vec<ExpandedMetric>)>, CatalogError> {
    slugs
        .iter()
        .map(|slug| {
            let metrics = catalog.list_metrics_for(slug)?;
            Ok((slug.clone(), metrics.iter().map(|m| expand_metric_definition(m, gateway)).collect()))
        })
        .collect()
}

/// Analyze every metric of the requested sub-industries.
///
/// Metrics run on a pool of `cfg.parallelism` threads; results come back in
/// (slug, catalog) order whatever the completion order.
pub fn analyze_report(
    catalog: &Catalog,
    slugs: &[String],
    company: &str,
    indexes: &ReportIndexes,
    gateway: &dyn ModelGateway,
    cfg: &AnalysisConfig,
) -> Result<AnalysisResults, CatalogError> {
    let started = Instant::now();
    for slug in slugs {
        catalog.sub_industry(slug)?;
    }
    let jobs: Vec<(usize, &MetricSpec)> = slugs
        .iter()
        .enumerate()
        .flat_map(|(i, slug)| {
            catalog
                .list_metrics_for(slug)
                .expect("slug validated above")
                .iter()
                .map(move |m| (i, m))
        })
        .collect();

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism.max(1))
        .build()
        .expect("thread pool builds");
    let assessments: Vec<(usize, DisclosureAssessment)> = pool.install(|| {
        jobs.par_iter()
            .map(|&(i, m)| {
                let expanded = expand_metric_definition(m, gateway);
                (i, analyze_metric(&expanded, indexes, gateway, &cfg.retrieval))
            })
            .collect()
    });

    let mut sub_industries: Vec<SubIndustryResults> = slugs
        .iter()
        .map(|s| SubIndustryResults {
            slug: s.clone(),
            assessments: Vec::new(),
        })
        .collect();
    for (i, a) in assessments {
        sub_industries[i].assessments.push(a);
    }
    Ok(AnalysisResults {
        schema: RESULTS_SCHEMA.to_string(),
        report_id: indexes.report_id.clone(),
        company: company.to_string(),
        framework: catalog.framework.id.clone(),
        generated_at: Utc::now(),
        sub_industries,
        runtime_ms: started.elapsed().as_millis() as u64,
    })
}
