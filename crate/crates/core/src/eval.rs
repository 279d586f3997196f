//! Exact-match scoring against ground truth, aggregation, and table rendering.

use std::collections::BTreeMap;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{normalize_unit_value, AnalysisResults, DisclosureAssessment, DisclosureStatus};
use crate::catalog::Catalog;

pub const EVAL_SCHEMA: &str = "euleresg/eval/v1";

/// Relative tolerance on normalized values.
pub const VALUE_REL_TOL: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("ground truth line {line}: {message}")]
    Csv { line: u64, message: String },
    #[error("ground truth references unknown metric {code} (sub-industry {slug})")]
    UnknownMetric { slug: String, code: String },
    #[error("ground truth for {company}/{slug} lacks metric {code}")]
    MissingGroundTruth { company: String, slug: String, code: String },
    #[error("assessment for {assessment} compared with ground truth for {ground_truth}")]
    CodeMismatch { assessment: String, ground_truth: String },
    #[error("no company-industry pairs to aggregate")]
    Empty,
    #[error("{0}")]
    Unit(#[from] crate::analysis::UnitError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruthEntry {
    pub company: String,
    pub slug: String,
    pub metric_code: String,
    pub expected_status: DisclosureStatus,
    pub expected_value: Option<f64>,
    pub expected_unit: Option<String>,
}

#[derive(Deserialize)]
struct GroundTruthRow {
    company: String,
    slug: String,
    metric_code: String,
    expected_status: String,
    expected_value: String,
    expected_unit: String,
}

pub fn parse_ground_truth(raw: &str) -> Result<Vec<GroundTruthEntry>, EvalError> {
    let mut reader = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(raw.as_bytes());
    let mut out = Vec::new();
    for rec in reader.deserialize::<GroundTruthRow>() {
        let row = rec.map_err(|e| EvalError::Csv {
            line: e.position().map_or(0, |p| p.line()),
            message: e.to_string(),
        })?;
        let line = out.len() as u64 + 2;
        let bad = |message: String| EvalError::Csv { line, message };
        let expected_status =
            DisclosureStatus::from_str(&row.expected_status).map_err(&bad)?;
        let expected_value = match row.expected_value.as_str() {
            "" => None,
            v => Some(
                crate::analysis::parse_number(v).ok_or_else(|| bad(format!("expected_value {v:?} is not a number")))?,
            ),
        };
        let expected_unit = (!row.expected_unit.is_empty()).then_some(row.expected_unit);
        if expected_value.is_some() && expected_unit.is_none() {
            return Err(bad("expected_value given without expected_unit".into()));
        }
        out.push(GroundTruthEntry {
            company: row.company,
            slug: row.slug,
            metric_code: row.metric_code,
            expected_status,
            expected_value,
            expected_unit,
        });
    }
    Ok(out)
}

pub fn load_ground_truth(path: &Path) -> Result<Vec<GroundTruthEntry>, EvalError> {
    let raw = std::fs::read_to_string(path).map_err(|e| EvalError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_ground_truth(&raw)
}

/// Status must match; when a value is expected, both sides are normalized
/// and must agree on canonical unit and on value within [`VALUE_REL_TOL`].
pub fn match_assessment(a: &DisclosureAssessment, g: &GroundTruthEntry) -> Result<bool, EvalError> {
    if a.metric_code != g.metric_code {
        return Err(EvalError::CodeMismatch {
            assessment: a.metric_code.clone(),
            ground_truth: g.metric_code.clone(),
        });
    }
    if a.status != g.expected_status {
        return Ok(false);
    }
    let Some(expected) = g.expected_value else { return Ok(true) };
    let Some(got) = &a.extracted else { return Ok(false) };
    let (gv, gu) = normalize_unit_value(expected, g.expected_unit.as_deref().unwrap_or(""))?;
    let (av, au) = normalize_unit_value(got.value_normalized, &got.unit_canonical)?;
    Ok(au == gu && (av - gv).abs() <= VALUE_REL_TOL * gv.abs().max(1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairAccuracy {
    pub company: String,
    pub industry: String,
    pub sub_industry: String,
    pub slug: String,
    pub accuracy: f64,
    pub matches: usize,
    pub n_metrics: usize,
    /// Metric codes that did not match, in catalog order.
    #[serde(default)]
    pub mismatches: Vec<String>,
}

impl PairAccuracy {
    /// A pair known only by its published accuracy.
    pub fn published(company: &str, industry: &str, sub_industry: &str, accuracy: f64) -> Self {
        Self {
            company: company.into(),
            industry: industry.into(),
            sub_industry: sub_industry.into(),
            slug: crate::catalog::derive_slug(sub_industry),
            accuracy,
            matches: 0,
            n_metrics: 0,
            mismatches: Vec::new(),
        }
    }
}

/// Score one company × sub-industry pair. The denominator is the number of
/// catalog metrics; a metric without an assessment counts as a mismatch.
pub fn compute_pair_accuracy(
    catalog: &Catalog,
    company: &str,
    slug: &str,
    assessments: &[DisclosureAssessment],
    ground_truth: &[GroundTruthEntry],
) -> Result<PairAccuracy, EvalError> {
    let sub = catalog.sub_industry(slug).map_err(|_| EvalError::UnknownMetric {
        slug: slug.into(),
        code: ground_truth.first().map(|g| g.metric_code.clone()).unwrap_or_default(),
    })?;
    let pair_truth: Vec<&GroundTruthEntry> = ground_truth
        .iter()
        .filter(|g| g.company == company && g.slug == slug)
        .collect();
    for g in &pair_truth {
        if !sub.metrics.iter().any(|m| m.code == g.metric_code) {
            return Err(EvalError::UnknownMetric {
                slug: slug.into(),
                code: g.metric_code.clone(),
            });
        }
    }
    let mut matches = 0;
    let mut mismatches = Vec::new();
    for m in &sub.metrics {
        let g = pair_truth
            .iter()
            .find(|g| g.metric_code == m.code)
            .ok_or_else(|| EvalError::MissingGroundTruth {
                company: company.into(),
                slug: slug.into(),
                code: m.code.clone(),
            })?;
        let ok = match assessments.iter().find(|a| a.metric_code == m.code) {
            Some(a) => match_assessment(a, g)?,
            None => false,
        };
        if ok {
            matches += 1;
        } else {
            mismatches.push(m.code.clone());
        }
    }
    let n = sub.metrics.len();
    Ok(PairAccuracy {
        company: company.into(),
        industry: sub.industry.clone(),
        sub_industry: sub.sub_industry.clone(),
        slug: slug.into(),
        accuracy: if n == 0 { 1.0 } else { matches as f64 / n as f64 },
        matches,
        n_metrics: n,
        mismatches,
    })
}

/// Every ground-truth code must exist somewhere in the catalog.
pub fn validate_ground_truth(catalog: &Catalog, ground_truth: &[GroundTruthEntry]) -> Result<(), EvalError> {
    for g in ground_truth {
        let known = catalog
            .list_metrics_for(&g.slug)
            .map(|ms| ms.iter().any(|m| m.code == g.metric_code))
            .unwrap_or(false);
        if !known {
            return Err(EvalError::UnknownMetric {
                slug: g.slug.clone(),
                code: g.metric_code.clone(),
            });
        }
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompanyValue {
    pub company: String,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub schema: String,
    pub model_label: String,
    pub pairs: Vec<PairAccuracy>,
    pub company_averages: Vec<CompanyValue>,
    pub overall_average: f64,
    /// End-to-end seconds per company.
    pub runtimes: Vec<CompanyValue>,
}

impl EvaluationReport {
    /// Mean of the per-company runtimes, if any were recorded.
    pub fn average_runtime(&self) -> Option<f64> {
        (!self.runtimes.is_empty())
            .then(|| self.runtimes.iter().map(|r| r.value).sum::<f64>() / self.runtimes.len() as f64)
    }

    pub fn company_average(&self, company: &str) -> Option<f64> {
        self.company_averages.iter().find(|c| c.company == company).map(|c| c.value)
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    sum / n as f64
}

/// Company averages (companies in first-appearance order) and the overall
/// mean over all pairs.
pub fn aggregate(model_label: &str, pairs: Vec<PairAccuracy>, runtimes: Vec<CompanyValue>) -> Result<EvaluationReport, EvalError> {
    if pairs.is_empty() {
        return Err(EvalError::Empty);
    }
    let mut companies: Vec<&str> = Vec::new();
    for p in &pairs {
        if !companies.contains(&p.company.as_str()) {
            companies.push(&p.company);
        }
    }
    let company_averages = companies
        .iter()
        .map(|c| CompanyValue {
            company: c.to_string(),
            value: mean(pairs.iter().filter(|p| p.company == *c).map(|p| p.accuracy)),
        })
        .collect();
    let overall_average = mean(pairs.iter().map(|p| p.accuracy));
    Ok(EvaluationReport {
        schema: EVAL_SCHEMA.to_string(),
        model_label: model_label.to_string(),
        pairs,
        company_averages,
        overall_average,
        runtimes,
    })
}

/// Score a set of analysis results (one per company) against ground truth.
pub fn evaluate(
    catalog: &Catalog,
    results: &[AnalysisResults],
    ground_truth: &[GroundTruthEntry],
    model_label: &str,
) -> Result<EvaluationReport, EvalError> {
    validate_ground_truth(catalog, ground_truth)?;
    let mut pairs = Vec::new();
    let mut runtimes = Vec::new();
    for r in results {
        for sub in &r.sub_industries {
            pairs.push(compute_pair_accuracy(catalog, &r.company, &sub.slug, &sub.assessments, ground_truth)?);
        }
        runtimes.push(CompanyValue {
            company: r.company.clone(),
            value: r.runtime_ms as f64 / 1000.0,
        });
    }
    aggregate(model_label, pairs, runtimes)
}

/// Two decimals, halves rounded away from zero. Inputs are nudged by 1e-9
/// so that values printed as e.g. 0.825 but stored just below still round up.
pub fn format_2dp(x: f64) -> String {
    let sign = if x < 0.0 { "-" } else { "" };
    let cents = (x.abs() * 100.0 + 0.5 + 1e-9).floor() as u64;
    format!("{sign}{}.{:02}", cents / 100, cents % 100)
}

/// Wall-clock seconds as printed in the runtime row.
pub fn format_runtime(seconds: f64) -> String {
    format_2dp(seconds)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TableFormat {
    Text,
    Csv,
    Markdown,
}

impl FromStr for TableFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "text" | "txt" => Ok(TableFormat::Text),
            "csv" => Ok(TableFormat::Csv),
            "markdown" | "md" => Ok(TableFormat::Markdown),
            other => Err(format!("unknown table format {other:?}")),
        }
    }
}

/// Rows of the rendered table: a header, one row per pair, an Average row
/// after each company, then Overall Acc and Runtime(s). One value column per
/// report, pairs aligned on (company, slug) of the first report.
pub fn table_rows(reports: &[EvaluationReport]) -> Vec<Vec<String>> {
    let mut rows = Vec::new();
    let mut header = vec!["Company".to_string(), "Industry".to_string(), "Sub-industry".to_string()];
    header.extend(reports.iter().map(|r| r.model_label.clone()));
    rows.push(header);
    let Some(first) = reports.first() else { return rows };

    let mut by_company: BTreeMap<usize, Vec<&PairAccuracy>> = BTreeMap::new();
    for p in &first.pairs {
        let idx = first
            .company_averages
            .iter()
            .position(|c| c.company == p.company)
            .unwrap_or(usize::MAX);
        by_company.entry(idx).or_default().push(p);
    }
    for pairs in by_company.values() {
        let company = &pairs[0].company;
        for p in pairs {
            let mut row = vec![company.clone(), p.industry.clone(), p.sub_industry.clone()];
            for r in reports {
                row.push(
                    r.pairs
                        .iter()
                        .find(|q| q.company == p.company && q.slug == p.slug)
                        .map_or_else(|| "-".to_string(), |q| format_2dp(q.accuracy)),
                );
            }
            rows.push(row);
        }
        let mut avg = vec![company.clone(), String::new(), "Average".to_string()];
        avg.extend(reports.iter().map(|r| r.company_average(company).map_or_else(|| "-".into(), format_2dp)));
        rows.push(avg);
    }
    let mut overall = vec!["Overall Acc".to_string(), String::new(), "Average".to_string()];
    overall.extend(reports.iter().map(|r| format_2dp(r.overall_average)));
    rows.push(overall);
    let mut runtime = vec!["Runtime(s)".to_string(), String::new(), "Average".to_string()];
    runtime.extend(reports.iter().map(|r| r.average_runtime().map_or_else(|| "-".into(), format_runtime)));
    rows.push(runtime);
    rows
}

pub fn render_table(reports: &[EvaluationReport], format: TableFormat) -> String {
    let rows = table_rows(reports);
    match format {
        TableFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            for r in &rows {
                w.write_record(r).expect("in-memory csv write");
            }
            String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv is utf-8")
        }
        TableFormat::Markdown => {
            let mut out = String::new();
            for (i, r) in rows.iter().enumerate() {
                out.push_str(&format!("| {} |\n", r.join(" | ")));
                if i == 0 {
                    let aligns: Vec<&str> = (0..r.len()).map(|c| if c < 3 { "---" } else { "---:" }).collect();
                    out.push_str(&format!("| {} |\n", aligns.join(" | ")));
                }
            }
            out
        }
        TableFormat::Text => {
            let ncols = rows.iter().map(Vec::len).max().unwrap_or(0);
            let widths: Vec<usize> = (0..ncols)
                .map(|c| rows.iter().filter_map(|r| r.get(c)).map(|s| s.chars().count()).max().unwrap_or(0))
                .collect();
            let mut out = String::new();
            for (i, r) in rows.iter().enumerate() {
                let cells: Vec<String> = r
                    .iter()
                    .enumerate()
                    .map(|(c, s)| if c < 3 { format!("{s:<w$}", w = widths[c]) } else { format!("{s:>w$}", w = widths[c]) })
                    .collect();
                out.push_str(cells.join("  ").trim_end());
                out.push('\n');
                if i == 0 {
                    out.push_str(&"-".repeat(widths.iter().sum::<usize>() + 2 * ncols.saturating_sub(1)));
                    out.push('\n');
                }
            }
            out
        }
    }
}
