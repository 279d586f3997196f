use crate::catalog::MetricSpec;
use crate::text::collapse_whitespace;

const ANALYSIS_SYSTEM_PROMPT: &str = include_str!("../../prompts/analysis_system.txt");

pub const NO_EVIDENCE_LINE: &str = "NO EVIDENCE RETRIEVED";

/// One evidence excerpt as shown to the model.
#[derive(Debug, Clone, PartialEq)]
pub struct EvidenceBlock<'a> {
    pub page_start: u32,
    pub page_end: u32,
    pub text: &'a str,
}

pub fn analysis_system_prompt() -> &'static str {
    ANALYSIS_SYSTEM_PROMPT
}

/// System and user prompt for one metric. Evidence blocks are numbered from
/// 1 in the order given.
pub fn build_analysis_prompt(metric: &MetricSpec, evidence: &[EvidenceBlock<'_>]) -> (String, String) {
    let mut user = format!(
        "Metric code: {}\nMetric name: {}\nDisclosure type: {}\nUnit: {}\nDescription: {}\nKeywords: {}\n\nEvidence:\n",
        metric.code,
        collapse_whitespace(&metric.name),
        metric.disclosure_type,
        metric.unit,
        collapse_whitespace(&metric.description),
        metric.keywords.join("; "),
    );
    if evidence.is_empty() {
        user.push_str(NO_EVIDENCE_LINE);
        user.push('\n');
    }
    for (i, e) in evidence.iter().enumerate() {
        if i > 0 {
            user.push('\n');
        }
        user.push_str(&format!("[EVIDENCE {} | pages {}–{}]\n{}\n", i + 1, e.page_start, e.page_end, e.text.trim()));
    }
    (ANALYSIS_SYSTEM_PROMPT.to_string(), user)
}
