//! JSON-lines and TSV readers/writers.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::gazetteer::B2eRecord;
use crate::types::{BrandEntityId, StoreTag};

pub const B2E_HEADER: &str = "store\tbrand_name\tentity_id";

fn parse_err(path: &Path, line: usize, reason: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        reason: reason.into(),
    }
}

/// One JSON value per non-blank line.
pub fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let f = BufReader::new(File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| parse_err(path, n + 1, e.to_string()))?);
    }
    Ok(out)
}

pub fn write_jsonl<'a, T: Serialize + 'a>(path: &Path, items: impl IntoIterator<Item = &'a T>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    for it in items {
        serde_json::to_writer(&mut w, it)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a brand-name-to-entity TSV (`store<TAB>brand_name<TAB>entity_id`
/// with that header line).
pub fn read_b2e_tsv(path: &Path) -> Result<Vec<B2eRecord>> {
    let f = BufReader::new(File::open(path)?);
    let mut lines = f.lines().enumerate();
    let header = lines.next().map(|(_, h)| h).transpose()?;
    if header.as_deref().map(|h| h.trim_end_matches('\r')) != Some(B2E_HEADER) {
        return Err(parse_err(path, 1, format!("expected header {B2E_HEADER:?}")));
    }
    let mut out = Vec::new();
    for (n, line) in lines {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() != 3 {
            return Err(parse_err(path, n + 1, format!("expected 3 columns, found {}", cols.len())));
        }
        let store = StoreTag::new(cols[0]).map_err(|e| parse_err(path, n + 1, e.to_string()))?;
        let entity = BrandEntityId::new(cols[2]).map_err(|e| parse_err(path, n + 1, e.to_string()))?;
        out.push(B2eRecord {
            store,
            surface: cols[1].to_string(),
            entity,
        });
    }
    Ok(out)
}

pub fn write_b2e_tsv<'a>(path: &Path, rows: impl IntoIterator<Item = &'a B2eRecord>) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{B2E_HEADER}")?;
    for r in rows {
        writeln!(w, "{}\t{}\t{}", r.store.as_str(), r.surface, r.entity.id())?;
    }
    w.flush()?;
    Ok(())
}
