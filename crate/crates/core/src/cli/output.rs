//! CSV tables with a schema line, atomic file writes and the run manifest.

use std::fmt::Write as _;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{Error, Result};

use super::config::RunConfig;

fn io_err(path: &Path, e: std::io::Error) -> Error {
    Error::InvalidState(format!("{}: {e}", path.display()))
}

/// Writes `bytes` to a sibling temporary file and renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|d| !d.as_os_str().is_empty()).unwrap_or(Path::new("."));
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let name = path.file_name().and_then(|n| n.to_str()).unwrap_or("out");
    let tmp = dir.join(format!(".{name}.tmp{}", std::process::id()));
    let mut f = fs::File::create(&tmp).map_err(|e| io_err(&tmp, e))?;
    f.write_all(bytes).map_err(|e| io_err(&tmp, e))?;
    f.sync_all().map_err(|e| io_err(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| io_err(path, e))
}

/// A table value rendered deterministically: floats use the shortest
/// round-trip representation.
pub enum Cell {
    F(f64),
    U(usize),
    B(bool),
    S(String),
}

impl std::fmt::Display for Cell {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Cell::F(v) if v.is_nan() => f.write_str("nan"),
            Cell::F(v) => write!(f, "{v:?}"),
            Cell::U(v) => write!(f, "{v}"),
            Cell::B(v) => f.write_str(if *v { "true" } else { "false" }),
            Cell::S(s) => f.write_str(s),
        }
    }
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::F(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::U(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::B(v)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::S(v.to_string())
    }
}

/// In-memory CSV: a `# schema=<name>.v<version>` line, a header, rows.
pub struct Table {
    schema: String,
    columns: Vec<&'static str>,
    body: String,
    rows: usize,
}

impl Table {
    pub fn new(schema: &str, version: u32, columns: &[&'static str]) -> Self {
        Self { schema: format!("{schema}.v{version}"), columns: columns.to_vec(), body: String::new(), rows: 0 }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        assert_eq!(row.len(), self.columns.len(), "row width for {}", self.schema);
        let line: Vec<String> = row.iter().map(|c| c.to_string()).collect();
        writeln!(self.body, "{}", line.join(",")).unwrap();
        self.rows += 1;
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn render(&self) -> String {
        format!("# schema={}\n{}\n{}", self.schema, self.columns.join(","), self.body)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        write_atomic(path, self.render().as_bytes())
    }
}

/// Formats a coupling for file names, e.g. `eps1.3000`.
pub fn eps_tag(eps: f64) -> String {
    format!("eps{eps:.4}")
}

#[derive(Debug, Clone, Serialize)]
pub struct ResidualEntry {
    pub eps: f64,
    pub residual: f64,
    pub n_levels: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunManifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub command: Vec<String>,
    pub config: RunConfig,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<PathBuf>,
    pub warnings: Vec<String>,
    pub residuals: Vec<ResidualEntry>,
    /// Model-specific extras, e.g. located thresholds.
    pub extra: serde_json::Value,
}

pub fn now_rfc3339() -> String {
    chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Millis, true)
}

impl RunManifest {
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        let path = dir.join("manifest.json");
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::InvalidState(e.to_string()))?;
        write_atomic(&path, text.as_bytes())?;
        Ok(path)
    }
}
