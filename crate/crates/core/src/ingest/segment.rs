use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use super::{merge_cross_page_structures, BlockKind, IngestError, ReportDocument};
use crate::text::collapse_whitespace;

pub const SEGMENTS_SCHEMA: &str = "euleresg/segments/v1";

/// Segments shorter than this (after normalization) are dropped.
pub const MIN_SEGMENT_CHARS: usize = 3;

/// `"{report_id}:{seq}"`. Ordering compares `seq` numerically, so `r:10`
/// sorts after `r:9`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SegmentId {
    pub report_id: String,
    pub seq: usize,
}

impl SegmentId {
    pub fn new(report_id: impl Into<String>, seq: usize) -> Self {
        Self {
            report_id: report_id.into(),
            seq,
        }
    }
}

impl fmt::Display for SegmentId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.report_id, self.seq)
    }
}

impl FromStr for SegmentId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let (report_id, seq) = s
            .rsplit_once(':')
            .ok_or_else(|| format!("segment id {s:?} lacks ':'"))?;
        let seq = seq
            .parse()
            .map_err(|_| format!("segment id {s:?} has a non-numeric sequence"))?;
        Ok(SegmentId::new(report_id, seq))
    }
}

impl Serialize for SegmentId {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for SegmentId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let raw = String::deserialize(d)?;
        raw.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub segment_id: SegmentId,
    pub kind: BlockKind,
    pub text: String,
    pub page_start: u32,
    pub page_end: u32,
    pub char_start: usize,
    pub char_end: usize,
}

impl Segment {
    pub fn covers_page(&self, page: u32) -> bool {
        self.page_start <= page && page <= self.page_end
    }
}

/// Normalize block text: paragraphs and headings become one line, tables
/// keep one line per non-empty row with whitespace runs collapsed.
pub fn normalize_block_text(kind: BlockKind, text: &str) -> String {
    match kind {
        BlockKind::Table => text
            .lines()
            .map(collapse_whitespace)
            .filter(|row| !row.is_empty())
            .collect::<Vec<_>>()
            .join("\n"),
        BlockKind::Paragraph | BlockKind::Heading => collapse_whitespace(text),
    }
}

/// Merge cross-page structures, then turn each merged block into a segment.
pub fn segment_document(doc: &ReportDocument) -> Vec<Segment> {
    merge_cross_page_structures(doc)
        .into_iter()
        .filter_map(|b| {
            let text = normalize_block_text(b.kind, &b.text);
            (text.chars().count() >= MIN_SEGMENT_CHARS).then_some((b, text))
        })
        .enumerate()
        .map(|(seq, (b, text))| Segment {
            segment_id: SegmentId::new(doc.report_id.clone(), seq),
            kind: b.kind,
            text,
            page_start: b.page_start,
            page_end: b.page_end,
            char_start: b.char_start,
            char_end: b.char_end,
        })
        .collect()
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct SegmentsHeader {
    schema: String,
    report_id: String,
    count: usize,
}

/// Write the segment dump: a header line, then one segment per line.
pub fn write_segments_jsonl(
    out: &mut impl Write,
    report_id: &str,
    segments: &[Segment],
) -> std::io::Result<()> {
    let header = SegmentsHeader {
        schema: SEGMENTS_SCHEMA.to_string(),
        report_id: report_id.to_string(),
        count: segments.len(),
    };
    serde_json::to_writer(&mut *out, &header)?;
    out.write_all(b"\n")?;
    for s in segments {
        serde_json::to_writer(&mut *out, s)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_segments_jsonl(input: impl BufRead) -> Result<(String, Vec<Segment>), IngestError> {
    let bad = |line: usize, message: String| IngestError::Schema {
        field: format!("segments line {line}"),
        message,
    };
    let mut lines = input.lines();
    let header_line = lines
        .next()
        .ok_or_else(|| bad(1, "empty segment dump".into()))?
        .map_err(|e| bad(1, e.to_string()))?;
    let header: SegmentsHeader = serde_json::from_str(&header_line).map_err(|e| bad(1, e.to_string()))?;
    if header.schema != SEGMENTS_SCHEMA {
        return Err(bad(1, format!("expected schema {SEGMENTS_SCHEMA}, found {}", header.schema)));
    }
    let mut segments = Vec::with_capacity(header.count);
    for (i, line) in lines.enumerate() {
        let line = line.map_err(|e| bad(i + 2, e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        segments.push(serde_json::from_str(&line).map_err(|e| bad(i + 2, e.to_string()))?);
    }
    if segments.len() != header.count {
        return Err(bad(1, format!("header declares {} segments, found {}", header.count, segments.len())));
    }
    Ok((header.report_id, segments))
}
