use std::path::PathBuf;
use std::process::Command;

use super::{BlockKind, IngestError, RawBlock};

/// Turns PDF bytes into one text string per page.
pub trait PdfTextExtractor: Send + Sync {
    fn extract_page_texts(&self, bytes: &[u8]) -> Result<Vec<String>, IngestError>;
}

/// Runs poppler's `pdftotext -layout` and splits its output on form feeds.
#[derive(Debug, Clone)]
pub struct PdftotextExtractor {
    pub program: PathBuf,
}

impl Default for PdftotextExtractor {
    fn default() -> Self {
        Self {
            program: PathBuf::from("pdftotext"),
        }
    }
}

impl PdfTextExtractor for PdftotextExtractor {
    fn extract_page_texts(&self, bytes: &[u8]) -> Result<Vec<String>, IngestError> {
        if !bytes.starts_with(b"%PDF-") {
            return Err(IngestError::Pdf {
                page: None,
                message: "missing %PDF- header".into(),
            });
        }
        let tmp = std::env::temp_dir().join(format!(
            "euleresg-{}-{}.pdf",
            std::process::id(),
            super::report_id_for(bytes)
        ));
        std::fs::write(&tmp, bytes).map_err(|e| IngestError::Pdf {
            page: None,
            message: format!("cannot stage PDF for extraction: {e}"),
        })?;
        let output = Command::new(&self.program)
            .args(["-layout", "-enc", "UTF-8"])
            .arg(&tmp)
            .arg("-")
            .output();
        let _ = std::fs::remove_file(&tmp);
        let output = output.map_err(|e| IngestError::Pdf {
            page: None,
            message: format!("cannot run {}: {e}", self.program.display()),
        })?;
        if !output.status.success() {
            return Err(IngestError::Pdf {
                page: None,
                message: String::from_utf8_lossy(&output.stderr).trim().to_string(),
            });
        }
        let text = String::from_utf8_lossy(&output.stdout);
        let mut pages: Vec<String> = text.split('\x0c').map(str::to_string).collect();
        // pdftotext terminates every page, including the last, with a form feed.
        if pages.last().is_some_and(|p| p.trim().is_empty()) {
            pages.pop();
        }
        Ok(pages)
    }
}

/// Extractor returning fixed page texts regardless of input; for tests and
/// for callers that already have page text.
#[derive(Debug, Clone, Default)]
pub struct FixedPagesExtractor(pub Vec<String>);

impl PdfTextExtractor for FixedPagesExtractor {
    fn extract_page_texts(&self, _bytes: &[u8]) -> Result<Vec<String>, IngestError> {
        Ok(self.0.clone())
    }
}

fn looks_tabular(line: &str) -> bool {
    let t = line.trim();
    t.contains('\t') || t.contains('|') || t.contains("  ")
}

fn ends_sentence(s: &str) -> bool {
    s.trim_end().ends_with(['.', '!', '?', ':', ';', ','])
}

/// Split extracted page text into blocks at blank lines and classify each.
///
/// A block of two or more lines where at least half the lines have column
/// gaps (tabs, pipes or double spaces) is a table. A single short line that
/// does not end in punctuation is a heading. Everything else is a paragraph.
pub fn blocks_from_page_text(page: &str) -> Vec<RawBlock> {
    let mut blocks = Vec::new();
    let mut current: Vec<&str> = Vec::new();
    let flush = |lines: &mut Vec<&str>, out: &mut Vec<RawBlock>| {
        if lines.is_empty() {
            return;
        }
        let tabular = lines.len() >= 2 && lines.iter().filter(|l| looks_tabular(l)).count() * 2 >= lines.len();
        let kind = if tabular {
            BlockKind::Table
        } else if lines.len() == 1 && lines[0].trim().chars().count() <= 80 && !ends_sentence(lines[0]) {
            BlockKind::Heading
        } else {
            BlockKind::Paragraph
        };
        let text = lines
            .iter()
            .map(|l| l.trim_end())
            .collect::<Vec<_>>()
            .join("\n");
        out.push(RawBlock {
            kind,
            text: text.trim_start_matches('\n').to_string(),
            continues: false,
        });
        lines.clear();
    };
    for line in page.lines() {
        if line.trim().is_empty() {
            flush(&mut current, &mut blocks);
        } else {
            current.push(line);
        }
    }
    flush(&mut current, &mut blocks);
    blocks
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn blocks_are_classified() {
        let page = "Climate Strategy\n\nOur energy use fell this year\nacross all sites.\n\nSite      MWh\nBerlin    120\nOslo      80\n\n12\n";
        let blocks = blocks_from_page_text(page);
        let kinds: Vec<_> = blocks.iter().map(|b| b.kind).collect();
        assert_eq!(
            kinds,
            vec![BlockKind::Heading, BlockKind::Paragraph, BlockKind::Table, BlockKind::Heading]
        );
        assert_eq!(blocks[1].text, "Our energy use fell this year\nacross all sites.");
        assert_eq!(blocks[3].text, "12");
    }

    #[test]
    fn non_pdf_bytes_are_rejected() {
        let err = PdftotextExtractor::default().extract_page_texts(b"hello").unwrap_err();
        assert!(matches!(err, IngestError::Pdf { .. }));
    }
}
