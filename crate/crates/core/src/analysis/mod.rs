//! Per-metric disclosure classification and per-report orchestration.

mod engine;
mod prompt;
pub mod units;
pub mod verdict;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::ingest::SegmentId;

pub use engine::{
    analyze_metric, analyze_metric_traced, analyze_report, expand_all, AnalysisConfig, AnalysisResults,
    SubIndustryResults, RESULTS_SCHEMA,
};
pub use prompt::{analysis_system_prompt, build_analysis_prompt, EvidenceBlock, NO_EVIDENCE_LINE};
pub use units::{normalize_unit_value, parse_number, UnitError, UnitTable};
pub use verdict::{parse_structured_verdict, ParsedVerdict, VerdictError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DisclosureStatus {
    Disclosed,
    PartiallyDisclosed,
    NotDisclosed,
}

impl DisclosureStatus {
    pub const ALL: [DisclosureStatus; 3] = [
        DisclosureStatus::Disclosed,
        DisclosureStatus::PartiallyDisclosed,
        DisclosureStatus::NotDisclosed,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            DisclosureStatus::Disclosed => "disclosed",
            DisclosureStatus::PartiallyDisclosed => "partially_disclosed",
            DisclosureStatus::NotDisclosed => "not_disclosed",
        }
    }

    /// Lenient parse used for model output: case-insensitive, with the
    /// "discussed" wording, a leading "fully" and spaces or hyphens accepted.
    pub fn coerce(raw: &str) -> Option<Self> {
        let mut key: String = raw
            .to_lowercase()
            .replace("(fully)", "fully")
            .chars()
            .map(|c| if c.is_alphanumeric() { c } else { '_' })
            .collect();
        while key.contains("__") {
            key = key.replace("__", "_");
        }
        let key = key.trim_matches('_');
        let key = key.strip_prefix("fully_").unwrap_or(key);
        match key {
            "disclosed" | "discussed" | "discussed_disclosed" | "disclosed_discussed" | "fully" => {
                Some(DisclosureStatus::Disclosed)
            }
            "partially_disclosed" | "partially_discussed" | "partially_discussed_disclosed" | "partial"
            | "partially" | "partly_disclosed" => Some(DisclosureStatus::PartiallyDisclosed),
            "not_disclosed" | "not_discussed" | "not_discussed_disclosed" | "undisclosed" | "none"
            | "nondisclosed" | "non_disclosed" => Some(DisclosureStatus::NotDisclosed),
            _ => None,
        }
    }
}

impl fmt::Display for DisclosureStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for DisclosureStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DisclosureStatus::coerce(s).ok_or_else(|| format!("unknown disclosure status {s:?}"))
    }
}

/// A reported value, as written and after unit normalization.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractedValue {
    pub raw_text: String,
    pub value: f64,
    pub unit_raw: String,
    pub value_normalized: f64,
    pub unit_canonical: String,
}

impl ExtractedValue {
    pub fn new(value: f64, unit_raw: &str) -> Result<Self, UnitError> {
        let (value_normalized, unit_canonical) = normalize_unit_value(value, unit_raw)?;
        Ok(Self {
            raw_text: format!("{value} {}", unit_raw.trim()).trim().to_string(),
            value,
            unit_raw: unit_raw.trim().to_string(),
            value_normalized,
            unit_canonical,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvidenceRef {
    pub segment_id: SegmentId,
    pub page_start: u32,
    pub page_end: u32,
    pub fused_score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DisclosureAssessment {
    pub metric_code: String,
    pub status: DisclosureStatus,
    pub extracted: Option<ExtractedValue>,
    pub evidence: Vec<EvidenceRef>,
    pub rationale: String,
    pub degraded: bool,
    /// Model-reported chat latency, summed over attempts.
    pub latency_ms: u64,
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn status_serialization_is_frozen() {
        let s: Vec<String> = DisclosureStatus::ALL
            .iter()
            .map(|s| serde_json::to_string(s).unwrap())
            .collect();
        assert_eq!(s, vec!["\"disclosed\"", "\"partially_disclosed\"", "\"not_disclosed\""]);
    }

    #[test]
    fn status_synonyms() {
        use DisclosureStatus::*;
        for (raw, want) in [
            ("disclosed", Disclosed),
            ("Fully_Disclosed", Disclosed),
            ("(Fully) Discussed/Disclosed", Disclosed),
            ("discussed", Disclosed),
            ("PARTIALLY_DISCLOSED", PartiallyDisclosed),
            ("Partially Discussed/Disclosed", PartiallyDisclosed),
            ("partially-disclosed", PartiallyDisclosed),
            ("Not Discussed/Disclosed", NotDisclosed),
            ("not disclosed", NotDisclosed),
        ] {
            assert_eq!(DisclosureStatus::coerce(raw), Some(want), "{raw}");
        }
        assert_eq!(DisclosureStatus::coerce("maybe"), None);
    }

    #[test]
    fn extracted_value_normalizes() {
        let v = ExtractedValue::new(2.5, "GWh").unwrap();
        assert_eq!((v.value_normalized, v.unit_canonical.as_str()), (2500.0, "MWh"));
        assert_eq!(v.raw_text, "2.5 GWh");
    }
}
