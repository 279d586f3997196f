use serde::{Deserialize, Serialize};

use super::{BlockKind, RawBlock, ReportDocument, ReportFormat};
use crate::text::collapse_whitespace;

/// A block after cross-page merging. Offsets are char offsets into the text
/// of `page_start`, covering the first page's portion only.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MergedBlock {
    pub kind: BlockKind,
    pub text: String,
    pub page_start: u32,
    pub page_end: u32,
    pub char_start: usize,
    pub char_end: usize,
}

struct Located<'a> {
    block: &'a RawBlock,
    page: u32,
    char_start: usize,
    char_end: usize,
    last_on_page: bool,
    first_on_page: bool,
}

fn first_row_signature(text: &str) -> String {
    text.lines()
        .find(|l| !l.trim().is_empty())
        .map(|l| collapse_whitespace(l).to_lowercase())
        .unwrap_or_default()
}

/// PDF-only continuation heuristic across a page boundary.
fn heuristic_continues(prev: &Located<'_>, next: &Located<'_>) -> bool {
    if !(prev.last_on_page && next.first_on_page && next.page == prev.page + 1) {
        return false;
    }
    match (prev.block.kind, next.block.kind) {
        (BlockKind::Paragraph, BlockKind::Paragraph) => {
            let ends_open = !prev.block.text.trim_end().ends_with(['.', '!', '?']);
            let starts_lower = next
                .block
                .text
                .trim_start()
                .chars()
                .next()
                .is_some_and(char::is_lowercase);
            ends_open && starts_lower
        }
        (BlockKind::Table, BlockKind::Table) => {
            let sig = first_row_signature(&prev.block.text);
            !sig.is_empty() && sig == first_row_signature(&next.block.text)
        }
        _ => false,
    }
}

fn append(merged: &mut MergedBlock, next: &Located<'_>) {
    if merged.kind == BlockKind::Table && next.block.kind == BlockKind::Table {
        let mut rows = next.block.text.lines().peekable();
        // A repeated header row on the continuation page is dropped.
        if rows.peek().map(|r| collapse_whitespace(r).to_lowercase())
            == Some(first_row_signature(&merged.text))
        {
            rows.next();
        }
        let rest = rows.collect::<Vec<_>>().join("\n");
        if !rest.trim().is_empty() {
            merged.text.push('\n');
            merged.text.push_str(&rest);
        }
    } else {
        merged.text.push(' ');
        merged.text.push_str(&next.block.text);
    }
    if next.page == merged.page_start {
        merged.char_end = next.char_end;
    }
    merged.page_end = next.page;
}

/// Join blocks that continue one another.
///
/// Pagestream input follows the `continues` flag. PDF input merges across a
/// page boundary when a paragraph ends without terminal punctuation and the
/// next page starts lowercase, or when two tables share their first row.
pub fn merge_cross_page_structures(doc: &ReportDocument) -> Vec<MergedBlock> {
    let mut located = Vec::new();
    for page in &doc.pages {
        let mut offset = 0usize;
        let n = page.blocks.len();
        for (i, block) in page.blocks.iter().enumerate() {
            let len = block.text.chars().count();
            located.push(Located {
                block,
                page: page.number,
                char_start: offset,
                char_end: offset + len,
                first_on_page: i == 0,
                last_on_page: i + 1 == n,
            });
            offset += len + 1; // the joining newline
        }
    }

    let mut out: Vec<MergedBlock> = Vec::new();
    let mut open = false;
    for (i, loc) in located.iter().enumerate() {
        if open {
            append(out.last_mut().expect("open block exists"), loc);
        } else {
            out.push(MergedBlock {
                kind: loc.block.kind,
                text: loc.block.text.clone(),
                page_start: loc.page,
                page_end: loc.page,
                char_start: loc.char_start,
                char_end: loc.char_end,
            });
        }
        open = match (doc.format, located.get(i + 1)) {
            (_, None) => false,
            (ReportFormat::Pagestream, Some(_)) => loc.block.continues,
            (ReportFormat::Pdf, Some(next)) => loc.block.continues || heuristic_continues(loc, next),
        };
    }
    out
}
