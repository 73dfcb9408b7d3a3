//! CSV tables and atomic file output.

use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use crate::record::RunRecord;

/// A named CSV document held in memory until the run finishes.
#[derive(Debug, Clone)]
pub struct Table {
    pub file: String,
    pub bytes: Vec<u8>,
    pub rows: usize,
}

impl Table {
    pub fn from_rows<R: Serialize>(file: &str, rows: &[R]) -> Result<Self> {
        let mut w = csv::Writer::from_writer(Vec::new());
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().context("flushing CSV")?;
        Ok(Table {
            file: file.to_string(),
            bytes,
            rows: rows.len(),
        })
    }
}

/// Writes `bytes` to `path` through a temporary file in the same directory.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Writes every table plus `run.json` under `dir/<experiment>/`; returns the
/// paths written.
pub fn write_outputs(dir: &Path, record: &RunRecord, tables: &[Table]) -> Result<Vec<PathBuf>> {
    let dir = dir.join(record.experiment.name());
    std::fs::create_dir_all(&dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut written = Vec::new();
    for t in tables {
        let path = dir.join(&t.file);
        write_atomic(&path, &t.bytes)?;
        written.push(path);
    }
    let path = dir.join("run.json");
    let json = serde_json::to_vec_pretty(record)?;
    write_atomic(&path, &json)?;
    written.push(path);
    Ok(written)
}
