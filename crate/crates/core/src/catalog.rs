//! Framework metric catalogs: loading, validation, refinement and semantic
//! expansion.
//!
//! A catalog file holds one framework and its sub-industry metric tables:
//!
//! ```json
//! {"framework": {"id": "sasb", "name": "SASB", "version": "2023-12"},
//!  "sub_industries": [{"industry": "...", "sub_industry": "...", "slug": "...",
//!    "metrics": [{"code", "name", "topic", "disclosure_type", "unit",
//!                 "description", "keywords", "expanded_definition"}]}]}
//! ```
//!
//! Unknown fields are rejected. The loaded catalog is immutable.

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::warn;

use crate::gateway::ModelGateway;
use crate::text;

/// Maximum length, in characters, of an expansion text.
pub const MAX_EXPANSION_CHARS: usize = 2000;

const EXPANSION_SYSTEM_PROMPT: &str = include_str!("../prompts/expansion_system.txt");

#[derive(Debug, Error)]
pub enum CatalogError {
    #[error("cannot read catalog {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("catalog parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{record}: {message}")]
    Invalid { record: String, message: String },
    #[error("duplicate metric code {code} in sub-industry {slug}")]
    DuplicateCode { slug: String, code: String },
    #[error("unknown sub-industry slug {slug:?}; available: {}", available.join(", "))]
    UnknownSlug { slug: String, available: Vec<String> },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Framework {
    pub id: String,
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisclosureType {
    Quantitative,
    Qualitative,
}

impl fmt::Display for DisclosureType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DisclosureType::Quantitative => "quantitative",
            DisclosureType::Qualitative => "qualitative",
        })
    }
}

/// One framework metric; the unit of analysis.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MetricSpec {
    pub code: String,
    pub name: String,
    pub sub_industry_slug: String,
    pub topic: String,
    pub disclosure_type: DisclosureType,
    pub unit: String,
    pub description: String,
    pub keywords: Vec<String>,
    pub expanded_definition: String,
}

impl MetricSpec {
    pub fn is_quantitative(&self) -> bool {
        self.disclosure_type == DisclosureType::Quantitative
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SubIndustry {
    pub framework_id: String,
    pub industry: String,
    pub sub_industry: String,
    pub slug: String,
    pub metrics: Vec<MetricSpec>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionSource {
    Curated,
    LlmGenerated,
}

/// A metric with the free text used as the semantic-channel query.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpandedMetric {
    pub metric: MetricSpec,
    pub expansion_text: String,
    pub expansion_source: ExpansionSource,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

// On-disk records. Kept separate from the in-memory types so the file format
// stays exact even if the domain types grow.

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct CatalogFile {
    framework: Framework,
    sub_industries: Vec<SubIndustryRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SubIndustryRecord {
    industry: String,
    sub_industry: String,
    slug: String,
    metrics: Vec<MetricRecord>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MetricRecord {
    code: String,
    name: String,
    topic: String,
    disclosure_type: DisclosureType,
    #[serde(default)]
    unit: String,
    #[serde(default)]
    description: String,
    #[serde(default)]
    keywords: Vec<String>,
    #[serde(default)]
    expanded_definition: String,
}

/// A loaded, validated catalog. Sub-industries and metrics keep file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Catalog {
    pub framework: Framework,
    pub sub_industries: Vec<SubIndustry>,
}

/// Lowercase and hyphenate a display name: "Software & IT Services" becomes
/// "software-it-services".
pub fn derive_slug(name: &str) -> String {
    name.split(|c: char| !c.is_alphanumeric())
        .filter(|s| !s.is_empty())
        .map(str::to_lowercase)
        .collect::<Vec<_>>()
        .join("-")
}

impl Catalog {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, CatalogError> {
        let path = path.as_ref();
        let raw = std::fs::read_to_string(path).map_err(|source| CatalogError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&raw)
    }

    pub fn from_json(raw: &str) -> Result<Self, CatalogError> {
        let file: CatalogFile = serde_json::from_str(raw).map_err(|e| CatalogError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })?;
        Self::from_file(file)
    }

    fn from_file(file: CatalogFile) -> Result<Self, CatalogError> {
        let framework = file.framework;
        if framework.id.trim().is_empty() {
            return Err(CatalogError::Invalid {
                record: "framework".into(),
                message: "framework id is empty".into(),
            });
        }

        let mut slugs = HashSet::new();
        let mut sub_industries = Vec::with_capacity(file.sub_industries.len());
        for (i, rec) in file.sub_industries.into_iter().enumerate() {
            let record = format!("sub_industries[{i}]");
            if rec.slug != derive_slug(&rec.sub_industry) {
                return Err(CatalogError::Invalid {
                    record,
                    message: format!(
                        "slug {:?} does not match sub-industry {:?} (expected {:?})",
                        rec.slug,
                        rec.sub_industry,
                        derive_slug(&rec.sub_industry)
                    ),
                });
            }
            if !slugs.insert(rec.slug.clone()) {
                return Err(CatalogError::Invalid {
                    record,
                    message: format!("duplicate slug {:?}", rec.slug),
                });
            }

            let mut codes = HashSet::new();
            let mut metrics = Vec::with_capacity(rec.metrics.len());
            for (j, m) in rec.metrics.into_iter().enumerate() {
                let record = format!("sub_industries[{i}].metrics[{j}]");
                if m.code.trim().is_empty() {
                    return Err(CatalogError::Invalid {
                        record,
                        message: "metric code is empty".into(),
                    });
                }
                if !codes.insert(m.code.clone()) {
                    return Err(CatalogError::DuplicateCode {
                        slug: rec.slug.clone(),
                        code: m.code,
                    });
                }
                if m.disclosure_type == DisclosureType::Quantitative && m.unit.trim().is_empty() {
                    return Err(CatalogError::Invalid {
                        record: format!("{record} ({})", m.code),
                        message: "quantitative metric has an empty unit".into(),
                    });
                }
                metrics.push(refine_metric(MetricSpec {
                    code: m.code,
                    name: m.name,
                    sub_industry_slug: rec.slug.clone(),
                    topic: m.topic,
                    disclosure_type: m.disclosure_type,
                    unit: m.unit,
                    description: m.description,
                    keywords: m.keywords,
                    expanded_definition: m.expanded_definition,
                }));
            }
            sub_industries.push(SubIndustry {
                framework_id: framework.id.clone(),
                industry: rec.industry,
                sub_industry: rec.sub_industry,
                slug: rec.slug,
                metrics,
            });
        }
        Ok(Catalog {
            framework,
            sub_industries,
        })
    }

    /// Serialize back to the catalog file format.
    pub fn to_json(&self) -> String {
        let file = CatalogFile {
            framework: self.framework.clone(),
            sub_industries: self
                .sub_industries
                .iter()
                .map(|s| SubIndustryRecord {
                    industry: s.industry.clone(),
                    sub_industry: s.sub_industry.clone(),
                    slug: s.slug.clone(),
                    metrics: s
                        .metrics
                        .iter()
                        .map(|m| MetricRecord {
                            code: m.code.clone(),
                            name: m.name.clone(),
                            topic: m.topic.clone(),
                            disclosure_type: m.disclosure_type,
                            unit: m.unit.clone(),
                            description: m.description.clone(),
                            keywords: m.keywords.clone(),
                            expanded_definition: m.expanded_definition.clone(),
                        })
                        .collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&file).expect("catalog serializes")
    }

    pub fn slugs(&self) -> Vec<String> {
        self.sub_industries.iter().map(|s| s.slug.clone()).collect()
    }

    pub fn sub_industry(&self, slug: &str) -> Result<&SubIndustry, CatalogError> {
        self.sub_industries
            .iter()
            .find(|s| s.slug == slug)
            .ok_or_else(|| CatalogError::UnknownSlug {
                slug: slug.to_string(),
                available: self.slugs(),
            })
    }

    /// Metrics of one sub-industry in catalog file order.
    pub fn list_metrics_for(&self, slug: &str) -> Result<&[MetricSpec], CatalogError> {
        self.sub_industry(slug).map(|s| s.metrics.as_slice())
    }

    /// First metric with this code, searching sub-industries in file order.
    pub fn find_metric(&self, code: &str) -> Option<&MetricSpec> {
        self.sub_industries
            .iter()
            .flat_map(|s| s.metrics.iter())
            .find(|m| m.code == code)
    }

    pub fn metric_count(&self) -> usize {
        self.sub_industries.iter().map(|s| s.metrics.len()).sum()
    }
}

/// Fill in missing keywords and description. Total and idempotent.
///
/// Keywords are trimmed, lowercased and deduplicated in order. When none are
/// given they come from the name tokens followed by the code tokens, with
/// stopwords removed. An empty description falls back to the name, then to
/// the code.
pub fn refine_metric(mut m: MetricSpec) -> MetricSpec {
    let mut seen = HashSet::new();
    let mut keywords: Vec<String> = m
        .keywords
        .iter()
        .map(|k| text::collapse_whitespace(k).to_lowercase())
        .filter(|k| !k.is_empty() && seen.insert(k.clone()))
        .collect();
    if keywords.is_empty() {
        keywords = text::tokenize(&m.name)
            .into_iter()
            .chain(text::tokenize(&m.code))
            .filter(|k| seen.insert(k.clone()))
            .collect();
    }
    m.keywords = keywords;

    if m.description.trim().is_empty() {
        m.description = if m.name.trim().is_empty() {
            m.code.clone()
        } else {
            m.name.clone()
        };
    }
    m
}

/// Deterministic definition text: name, description and keywords joined by
/// single spaces. Used as the mock expansion and as the failure fallback.
pub fn definition_concat(name: &str, description: &str, keywords: &[String]) -> String {
    [name.trim(), description.trim(), &keywords.join(" ")]
        .into_iter()
        .filter(|p| !p.is_empty())
        .collect::<Vec<_>>()
        .join(" ")
}

/// User message of the expansion prompt. The mock backend parses these lines.
pub fn expansion_user_prompt(m: &MetricSpec) -> String {
    format!(
        "Metric code: {}\nMetric name: {}\nDisclosure type: {}\nUnit: {}\nDescription: {}\nKeywords: {}\n",
        m.code,
        m.name,
        m.disclosure_type,
        m.unit,
        m.description,
        m.keywords.join("; ")
    )
}

pub fn expansion_system_prompt() -> &'static str {
    EXPANSION_SYSTEM_PROMPT
}

/// Attach the semantic-channel query text to a refined metric.
///
/// A curated `expanded_definition` is used as is. Otherwise one chat call
/// generates it; on gateway failure the deterministic concatenation is used
/// and a warning is recorded.
pub fn expand_metric_definition(m: &MetricSpec, gateway: &dyn ModelGateway) -> ExpandedMetric {
    let curated = m.expanded_definition.trim();
    if !curated.is_empty() {
        return ExpandedMetric {
            metric: m.clone(),
            expansion_text: text::truncate_at_whitespace(curated, MAX_EXPANSION_CHARS),
            expansion_source: ExpansionSource::Curated,
            warning: None,
        };
    }

    let fallback = |warning: String| {
        warn!(code = %m.code, %warning, "metric expansion fell back to concatenation");
        ExpandedMetric {
            metric: m.clone(),
            expansion_text: text::truncate_at_whitespace(
                &definition_concat(&m.name, &m.description, &m.keywords),
                MAX_EXPANSION_CHARS,
            ),
            expansion_source: ExpansionSource::Curated,
            warning: Some(warning),
        }
    };

    match gateway.complete_chat(EXPANSION_SYSTEM_PROMPT, &expansion_user_prompt(m)) {
        Ok(exchange) => {
            let generated = exchange.response_text.trim();
            if generated.is_empty() {
                fallback("expansion model returned empty text".into())
            } else {
                ExpandedMetric {
                    metric: m.clone(),
                    expansion_text: text::truncate_at_whitespace(generated, MAX_EXPANSION_CHARS),
                    expansion_source: ExpansionSource::LlmGenerated,
                    warning: None,
                }
            }
        }
        Err(e) => fallback(format!("expansion call failed: {e}")),
    }
}
