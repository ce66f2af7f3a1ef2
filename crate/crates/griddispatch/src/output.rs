//! Atomic file output and CSV tables that verify themselves after writing.

use std::io::Write;
use std::path::Path;

use anyhow::{bail, Context, Result};

/// Writes `bytes` to a temporary file next to `path`, then renames it over `path`.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a temporary file in {}", dir.display()))?;
    tmp.write_all(bytes)?;
    tmp.flush()?;
    tmp.persist(path).with_context(|| format!("renaming into {}", path.display()))?;
    Ok(())
}

#[derive(Clone, Debug, PartialEq)]
pub struct CsvTable {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl CsvTable {
    pub fn new(header: &[&str]) -> Self {
        CsvTable {
            header: header.iter().map(|s| s.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.into_inner().map_err(|e| anyhow::anyhow!("{e}"))
    }

    pub fn parse(text: &[u8]) -> Result<CsvTable> {
        let mut r = csv::Reader::from_reader(text);
        let header = r.headers()?.iter().map(str::to_string).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec?.iter().map(str::to_string).collect());
        }
        Ok(CsvTable { header, rows })
    }

    /// Writes atomically, then re-reads the file and checks header and shape.
    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)?;
        let text = std::fs::read(path)?;
        check_schema(&text, &self.header.iter().map(String::as_str).collect::<Vec<_>>(), Some(self.rows.len()))
            .with_context(|| format!("schema check of {}", path.display()))
    }

    pub fn column(&self, name: &str) -> Option<Vec<&str>> {
        let i = self.header.iter().position(|h| h == name)?;
        Some(self.rows.iter().map(|r| r[i].as_str()).collect())
    }
}

/// Checks that `text` is a CSV with exactly `header` and uniform rows.
pub fn check_schema(text: &[u8], header: &[&str], rows: Option<usize>) -> Result<()> {
    let table = CsvTable::parse(text)?;
    if table.header != header {
        bail!("header {:?} differs from expected {:?}", table.header, header);
    }
    if let Some(n) = rows {
        if table.rows.len() != n {
            bail!("{} rows read back, {} written", table.rows.len(), n);
        }
    }
    Ok(())
}
