//! CSV artifacts and their sidecar manifests.
//!
//! Numbers are written with 17 significant digits (`{:.16e}`), enough to
//! round-trip any `f64`, so identical inputs give byte-identical files.
//! Every write goes to a temporary file in the target directory and is then
//! renamed into place.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::Error;

fn io_err(path: &Path, source: std::io::Error) -> Error {
    Error::Io {
        path: path.display().to_string(),
        source,
    }
}

/// 17 significant digits in scientific notation.
pub fn format_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else if v.is_infinite() {
        if v > 0.0 { "inf" } else { "-inf" }.into()
    } else {
        format!("{v:.16e}")
    }
}

/// Write `bytes` to `path` through a temporary file and an atomic rename.
pub fn atomic_write(path: &Path, bytes: &[u8]) -> Result<(), Error> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d.to_path_buf(),
        _ => PathBuf::from("."),
    };
    fs::create_dir_all(&dir).map_err(|e| io_err(&dir, e))?;
    let mut tmp = tempfile::NamedTempFile::new_in(&dir).map_err(|e| io_err(&dir, e))?;
    tmp.write_all(bytes).map_err(|e| io_err(path, e))?;
    tmp.as_file().sync_all().map_err(|e| io_err(path, e))?;
    tmp.persist(path).map_err(|e| io_err(path, e.error))?;
    Ok(())
}

/// A numeric table with named columns, rendered as CSV.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Table {
    /// Lines written before the header, each prefixed with `# `.
    pub comments: Vec<String>,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new(columns: Vec<String>) -> Self {
        Self {
            comments: Vec::new(),
            columns,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    /// Values of the named column.
    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        for c in &self.comments {
            out.push_str("# ");
            out.push_str(c);
            out.push('\n');
        }
        out.push_str(&self.columns.join(","));
        out.push('\n');
        for row in &self.rows {
            let cells: Vec<String> = row.iter().map(|&v| format_f64(v)).collect();
            out.push_str(&cells.join(","));
            out.push('\n');
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, String> {
        let mut comments = Vec::new();
        let mut lines = text.lines().enumerate();
        let columns = loop {
            let (_, line) = lines.next().ok_or("missing header")?;
            if let Some(c) = line.strip_prefix('#') {
                comments.push(c.trim_start().to_string());
            } else {
                break line.split(',').map(str::to_string).collect::<Vec<_>>();
            }
        };
        let mut rows = Vec::new();
        for (k, line) in lines {
            if line.is_empty() {
                continue;
            }
            let row = line
                .split(',')
                .map(|cell| cell.trim().parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| format!("line {}: {e}", k + 1))?;
            if row.len() != columns.len() {
                return Err(format!(
                    "line {}: expected {} cells, found {}",
                    k + 1,
                    columns.len(),
                    row.len()
                ));
            }
            rows.push(row);
        }
        Ok(Self {
            comments,
            columns,
            rows,
        })
    }

    pub fn write(&self, path: &Path) -> Result<(), Error> {
        atomic_write(path, self.render().as_bytes())
    }

    pub fn read(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        Self::parse(&text).map_err(|m| Error::Config(format!("{}: {m}", path.display())))
    }
}

/// Reproducibility record written next to every output.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    /// Content hash of the ensemble spec, when one was used.
    pub config_hash: Option<String>,
    /// The ensemble config as loaded (after flag overrides).
    pub config: Option<serde_json::Value>,
    /// Numeric parameters: N, precision, Nyström order, grids, seed, ...
    pub parameters: BTreeMap<String, serde_json::Value>,
    pub outputs: Vec<String>,
    pub warnings: Vec<String>,
    pub wall_time_s: f64,
}

impl RunManifest {
    pub fn new(command: &str) -> Self {
        Self {
            tool: env!("CARGO_PKG_NAME").into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: command.into(),
            config_hash: None,
            config: None,
            parameters: BTreeMap::new(),
            outputs: Vec::new(),
            warnings: Vec::new(),
            wall_time_s: 0.0,
        }
    }

    pub fn set(&mut self, key: &str, value: impl Serialize) {
        let v = serde_json::to_value(value).unwrap_or(serde_json::Value::Null);
        self.parameters.insert(key.into(), v);
    }

    /// `density.csv` → `density.manifest.json`.
    pub fn sidecar_path(output: &Path) -> PathBuf {
        output.with_extension("manifest.json")
    }

    pub fn write_for(&self, output: &Path) -> Result<PathBuf, Error> {
        let path = Self::sidecar_path(output);
        let text = serde_json::to_string_pretty(self).expect("manifest serializes");
        atomic_write(&path, format!("{text}\n").as_bytes())?;
        Ok(path)
    }

    pub fn read(path: &Path) -> Result<Self, Error> {
        let text = fs::read_to_string(path).map_err(|e| io_err(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }
}
