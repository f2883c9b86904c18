//! Versioned CSV tables and JSON provenance sidecars.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::{CliError, Result};

pub const CSV_VERSION_LINE: &str = "# bohmstab-csv v1";

/// Buffered CSV writer that emits the schema line and column header.
pub struct CsvTable {
    path: PathBuf,
    out: BufWriter<File>,
    columns: usize,
}

impl CsvTable {
    pub fn create(path: &Path, header: &[&str]) -> Result<Self> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
            }
        }
        let file = File::create(path).map_err(|e| CliError::io(path, e))?;
        let mut t = Self {
            path: path.to_path_buf(),
            out: BufWriter::new(file),
            columns: header.len(),
        };
        t.line(&format!("{CSV_VERSION_LINE}\n{}", header.join(",")))?;
        Ok(t)
    }

    fn line(&mut self, s: &str) -> Result<()> {
        writeln!(self.out, "{s}").map_err(|e| CliError::io(&self.path, e))
    }

    /// Writes one row. Floats use the shortest representation that
    /// round-trips, so output is reproducible byte for byte.
    pub fn row(&mut self, cells: &[Cell<'_>]) -> Result<()> {
        debug_assert_eq!(cells.len(), self.columns);
        let text: Vec<String> = cells.iter().map(Cell::render).collect();
        self.line(&text.join(","))
    }

    pub fn finish(mut self) -> Result<PathBuf> {
        self.out.flush().map_err(|e| CliError::io(&self.path, e))?;
        Ok(self.path)
    }
}

pub enum Cell<'a> {
    F(f64),
    Text(&'a str),
}

impl Cell<'_> {
    fn render(&self) -> String {
        match self {
            Cell::F(v) => format!("{v:?}"),
            Cell::Text(s) => s.to_string(),
        }
    }
}

/// Sidecar written next to every CSV output.
#[derive(Debug, Serialize)]
pub struct Provenance<'a, D: Serialize> {
    pub tool: &'static str,
    pub version: &'static str,
    pub csv_schema: &'static str,
    pub command: &'a str,
    pub scenario: &'a str,
    pub seed: u64,
    pub outputs: Vec<String>,
    pub config: &'a ExperimentConfig,
    pub details: D,
}

pub fn write_sidecar<D: Serialize>(
    path: &Path,
    command: &str,
    config: &ExperimentConfig,
    outputs: &[PathBuf],
    details: D,
) -> Result<PathBuf> {
    let doc = Provenance {
        tool: "bohmstab",
        version: env!("CARGO_PKG_VERSION"),
        csv_schema: CSV_VERSION_LINE.trim_start_matches("# "),
        command,
        scenario: &config.scenario,
        seed: config.seed,
        outputs: outputs
            .iter()
            .map(|p| {
                p.file_name()
                    .map(|n| n.to_string_lossy().into_owned())
                    .unwrap_or_default()
            })
            .collect(),
        config,
        details,
    };
    write_json(path, &doc)?;
    Ok(path.to_path_buf())
}

/// Reads rows of a versioned CSV file, skipping comment and header lines.
pub fn read_numeric_rows(path: &Path, columns: usize) -> Result<Vec<Vec<f64>>> {
    let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let mut rows = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').map(str::trim).collect();
        let parsed: std::result::Result<Vec<f64>, _> = fields.iter().map(|f| f.parse::<f64>()).collect();
        match parsed {
            Ok(v) if v.len() == columns => rows.push(v),
            Ok(v) => {
                return Err(CliError::Input(format!(
                    "{}:{}: expected {columns} columns, found {}",
                    path.display(),
                    i + 1,
                    v.len()
                )))
            }
            // header line
            Err(_) if rows.is_empty() => continue,
            Err(e) => return Err(CliError::Input(format!("{}:{}: {e}", path.display(), i + 1))),
        }
    }
    Ok(rows)
}

/// Writes any serializable value as pretty JSON.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text).map_err(|e| CliError::io(path, e))
}
