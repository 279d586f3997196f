//! On-disk layout of one report's indexes:
//!
//! * `segments.jsonl`: the segment dump.
//! * `keyword_index.json`: the BM25 postings, schema-versioned JSON.
//! * `vectors.bin`: little-endian binary vector table.
//!
//! `vectors.bin` layout: magic `EESGVEC\0`, then u32 version, u32 dim,
//! u32 count, length-prefixed (u32) UTF-8 model id and report id, then
//! `count * dim` f64 values row by row, then `count` u64 segment sequence
//! numbers.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{IndexError, KeywordIndex, VectorIndex};
use crate::ingest::SegmentId;

pub const KEYWORD_INDEX_SCHEMA: &str = "euleresg/keyword-index/v1";
pub const VECTORS_MAGIC: &[u8; 8] = b"EESGVEC\0";
pub const VECTORS_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct KeywordFile {
    schema: String,
    #[serde(flatten)]
    index: KeywordIndex,
}

pub fn keyword_index_bytes(index: &KeywordIndex) -> Vec<u8> {
    let file = KeywordFile {
        schema: KEYWORD_INDEX_SCHEMA.to_string(),
        index: index.clone(),
    };
    serde_json::to_vec(&file).expect("keyword index serializes")
}

pub fn save_keyword_index(path: &Path, index: &KeywordIndex) -> Result<(), IndexError> {
    std::fs::write(path, keyword_index_bytes(index)).map_err(|e| IndexError::io(path, e))
}

pub fn load_keyword_index(path: &Path) -> Result<KeywordIndex, IndexError> {
    let raw = std::fs::read(path).map_err(|e| IndexError::io(path, e))?;
    let file: KeywordFile = serde_json::from_slice(&raw).map_err(|e| IndexError::Format(e.to_string()))?;
    if file.schema != KEYWORD_INDEX_SCHEMA {
        return Err(IndexError::Format(format!(
            "expected schema {KEYWORD_INDEX_SCHEMA}, found {}",
            file.schema
        )));
    }
    Ok(file.index)
}

fn write_str(out: &mut impl Write, s: &str) -> std::io::Result<()> {
    out.write_all(&(s.len() as u32).to_le_bytes())?;
    out.write_all(s.as_bytes())
}

pub fn write_vectors(out: &mut impl Write, index: &VectorIndex) -> std::io::Result<()> {
    out.write_all(VECTORS_MAGIC)?;
    out.write_all(&VECTORS_VERSION.to_le_bytes())?;
    out.write_all(&(index.dim as u32).to_le_bytes())?;
    out.write_all(&(index.ids.len() as u32).to_le_bytes())?;
    write_str(out, &index.model_id)?;
    write_str(out, &index.report_id)?;
    for v in &index.values {
        out.write_all(&v.to_le_bytes())?;
    }
    for id in &index.ids {
        out.write_all(&(id.seq as u64).to_le_bytes())?;
    }
    Ok(())
}

struct Reader<R> {
    inner: R,
}

impl<R: Read> Reader<R> {
    fn bytes<const N: usize>(&mut self) -> Result<[u8; N], IndexError> {
        let mut buf = [0u8; N];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| IndexError::Format(format!("truncated vector file: {e}")))?;
        Ok(buf)
    }

    fn u32(&mut self) -> Result<u32, IndexError> {
        Ok(u32::from_le_bytes(self.bytes()?))
    }

    fn string(&mut self) -> Result<String, IndexError> {
        let len = self.u32()? as usize;
        let mut buf = vec![0u8; len];
        self.inner
            .read_exact(&mut buf)
            .map_err(|e| IndexError::Format(format!("truncated vector file: {e}")))?;
        String::from_utf8(buf).map_err(|e| IndexError::Format(e.to_string()))
    }
}

pub fn read_vectors(input: impl Read) -> Result<VectorIndex, IndexError> {
    let mut r = Reader { inner: input };
    if &r.bytes::<8>()? != VECTORS_MAGIC {
        return Err(IndexError::Format("not a vector index file".into()));
    }
    let version = r.u32()?;
    if version != VECTORS_VERSION {
        return Err(IndexError::Format(format!("unsupported vector file version {version}")));
    }
    let dim = r.u32()? as usize;
    let count = r.u32()? as usize;
    let model_id = r.string()?;
    let report_id = r.string()?;
    let mut values = Vec::with_capacity(dim * count);
    for _ in 0..dim * count {
        values.push(f64::from_le_bytes(r.bytes()?));
    }
    let mut ids = Vec::with_capacity(count);
    for _ in 0..count {
        ids.push(SegmentId::new(report_id.clone(), u64::from_le_bytes(r.bytes()?) as usize));
    }
    Ok(VectorIndex {
        report_id,
        model_id,
        dim,
        ids,
        values,
    })
}

pub fn save_vector_index(path: &Path, index: &VectorIndex) -> Result<(), IndexError> {
    let file = File::create(path).map_err(|e| IndexError::io(path, e))?;
    let mut out = BufWriter::new(file);
    write_vectors(&mut out, index).map_err(|e| IndexError::io(path, e))?;
    out.flush().map_err(|e| IndexError::io(path, e))
}

pub fn load_vector_index(path: &Path) -> Result<VectorIndex, IndexError> {
    let file = File::open(path).map_err(|e| IndexError::io(path, e))?;
    read_vectors(BufReader::new(file))
}
