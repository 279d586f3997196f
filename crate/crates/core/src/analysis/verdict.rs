//! Parsing model replies into a structured verdict.

use serde_json::Value;
use thiserror::Error;

use super::units::parse_number;
use super::{DisclosureStatus, ExtractedValue};
use crate::catalog::MetricSpec;

#[derive(Debug, Clone, Error, PartialEq)]
pub enum VerdictError {
    #[error("no JSON object in model reply")]
    NoObject,
    #[error("model reply is not valid JSON: {0}")]
    InvalidJson(String),
    #[error("model reply lacks required key {0:?}")]
    MissingKey(&'static str),
    #[error("model reply has unknown status {0:?}")]
    InvalidStatus(String),
}

/// The fields of a parsed verdict, before they are turned into an assessment.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsedVerdict {
    pub status: DisclosureStatus,
    pub extracted: Option<ExtractedValue>,
    pub evidence_indices: Vec<usize>,
    pub rationale: String,
}

fn strip_code_fences(text: &str) -> String {
    text.lines()
        .filter(|l| !l.trim_start().starts_with("```"))
        .collect::<Vec<_>>()
        .join("\n")
}

/// The first `{...}` with balanced braces, skipping braces inside JSON strings.
pub fn first_balanced_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let mut depth = 0usize;
    let mut in_string = false;
    let mut escaped = false;
    for (i, c) in text[start..].char_indices() {
        if in_string {
            match c {
                _ if escaped => escaped = false,
                '\\' => escaped = true,
                '"' => in_string = false,
                _ => {}
            }
            continue;
        }
        match c {
            '"' => in_string = true,
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i + 1]);
                }
            }
            _ => {}
        }
    }
    None
}

fn non_empty_string(v: Option<&Value>) -> Option<String> {
    match v? {
        Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_string()),
        Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

/// Parse a model reply.
///
/// Code fences are stripped, the first balanced object is parsed, and the
/// status is coerced leniently. `status` and `rationale` are required;
/// `value`, `unit` and `evidence_indices` are optional.
///
/// The result is then made consistent with the metric: qualitative metrics
/// never carry a value, and a quantitative "disclosed" without a readable
/// value becomes "partially_disclosed".
pub fn parse_structured_verdict(response_text: &str, metric: &MetricSpec) -> Result<ParsedVerdict, VerdictError> {
    let cleaned = strip_code_fences(response_text);
    let object = first_balanced_object(&cleaned).ok_or(VerdictError::NoObject)?;
    let json: Value = serde_json::from_str(object).map_err(|e| VerdictError::InvalidJson(e.to_string()))?;

    let raw_status = json
        .get("status")
        .and_then(Value::as_str)
        .ok_or(VerdictError::MissingKey("status"))?;
    let mut status =
        DisclosureStatus::coerce(raw_status).ok_or_else(|| VerdictError::InvalidStatus(raw_status.to_string()))?;
    let mut rationale = json
        .get("rationale")
        .and_then(Value::as_str)
        .ok_or(VerdictError::MissingKey("rationale"))?
        .trim()
        .to_string();

    let evidence_indices = json
        .get("evidence_indices")
        .and_then(Value::as_array)
        .map(|a| a.iter().filter_map(Value::as_u64).map(|i| i as usize).collect())
        .unwrap_or_default();

    let value_raw = non_empty_string(json.get("value"));
    let unit_raw = non_empty_string(json.get("unit")).unwrap_or_else(|| metric.unit.clone());
    let extracted = match (&value_raw, metric.is_quantitative(), status) {
        (Some(v), true, DisclosureStatus::Disclosed) => parse_number(v)
            .and_then(|n| ExtractedValue::new(n, &unit_raw).ok())
            .map(|mut e| {
                e.raw_text = format!("{v} {unit_raw}").trim().to_string();
                e
            }),
        _ => None,
    };
    if metric.is_quantitative() && status == DisclosureStatus::Disclosed && extracted.is_none() {
        status = DisclosureStatus::PartiallyDisclosed;
        rationale.push_str(" [downgraded: no readable value for a quantitative metric]");
    }

    Ok(ParsedVerdict {
        status,
        extracted,
        evidence_indices,
        rationale,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::catalog::DisclosureType;

    fn metric(kind: DisclosureType) -> MetricSpec {
        MetricSpec {
            code: "TC-SI-130a.1".into(),
            name: "Total energy consumed".into(),
            sub_industry_slug: "s".into(),
            topic: "t".into(),
            disclosure_type: kind,
            unit: if kind == DisclosureType::Quantitative { "MWh".into() } else { String::new() },
            description: "d".into(),
            keywords: vec!["energy".into()],
            expanded_definition: String::new(),
        }
    }

    #[test]
    fn fenced_json_with_value() {
        let reply = "```json\n{\"status\":\"disclosed\",\"value\":\"2,500\",\"unit\":\"MWh\",\"rationale\":\"stated\"}\n```";
        let v = parse_structured_verdict(reply, &metric(DisclosureType::Quantitative)).unwrap();
        assert_eq!(v.status, DisclosureStatus::Disclosed);
        let e = v.extracted.unwrap();
        assert_eq!((e.value, e.value_normalized, e.unit_canonical.as_str()), (2500.0, 2500.0, "MWh"));
        assert_eq!(e.raw_text, "2,500 MWh");
    }

    #[test]
    fn uppercase_status_without_value() {
        let v = parse_structured_verdict(
            "{\"status\":\"PARTIALLY_DISCLOSED\",\"rationale\":\"policy only\"}",
            &metric(DisclosureType::Quantitative),
        )
        .unwrap();
        assert_eq!(v.status, DisclosureStatus::PartiallyDisclosed);
        assert!(v.extracted.is_none());
    }

    #[test]
    fn prose_is_an_error() {
        assert_eq!(
            parse_structured_verdict("I cannot determine the answer.", &metric(DisclosureType::Quantitative)),
            Err(VerdictError::NoObject)
        );
        assert!(matches!(
            parse_structured_verdict("{\"status\":\"unsure\",\"rationale\":\"x\"}", &metric(DisclosureType::Qualitative)),
            Err(VerdictError::InvalidStatus(_))
        ));
        assert_eq!(
            parse_structured_verdict("{\"status\":\"disclosed\"}", &metric(DisclosureType::Qualitative)),
            Err(VerdictError::MissingKey("rationale"))
        );
    }

    #[test]
    fn braces_inside_strings_and_surrounding_prose() {
        let reply = "Here you go: {\"status\":\"disclosed\",\"rationale\":\"uses {braces}\"} thanks";
        let v = parse_structured_verdict(reply, &metric(DisclosureType::Qualitative)).unwrap();
        assert_eq!(v.rationale, "uses {braces}");
    }

    #[test]
    fn quantitative_disclosed_without_value_is_downgraded() {
        let v = parse_structured_verdict("{\"status\":\"disclosed\",\"rationale\":\"r\"}", &metric(DisclosureType::Quantitative)).unwrap();
        assert_eq!(v.status, DisclosureStatus::PartiallyDisclosed);
    }

    #[test]
    fn qualitative_never_carries_a_value() {
        let v = parse_structured_verdict(
            "{\"status\":\"disclosed\",\"value\":12,\"unit\":\"MWh\",\"rationale\":\"r\"}",
            &metric(DisclosureType::Qualitative),
        )
        .unwrap();
        assert_eq!(v.status, DisclosureStatus::Disclosed);
        assert!(v.extracted.is_none());
    }

    #[test]
    fn numeric_value_and_missing_unit_falls_back_to_metric_unit() {
        let v = parse_structured_verdict("{\"status\":\"disclosed\",\"value\":2.5,\"rationale\":\"r\"}", &metric(DisclosureType::Quantitative)).unwrap();
        assert_eq!(v.extracted.unwrap().unit_canonical, "MWh");
    }
}
