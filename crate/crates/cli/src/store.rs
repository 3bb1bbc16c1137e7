//! Output directory layout: `manifest.json`, CSV tables and `fields/`.

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::Serialize;
use serde_json::Value;
use thiserror::Error;

use peaklab::Field64;

use crate::config::RunConfig;
use crate::snapshot::write_snapshot;

#[derive(Debug, Error)]
#[error("cannot write {}: {source}", path.display())]
pub struct StoreError {
    pub path: PathBuf,
    #[source]
    pub source: std::io::Error,
}

fn io<T>(path: &Path, r: std::io::Result<T>) -> Result<T, StoreError> {
    r.map_err(|source| StoreError {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Ok,
    NotConverged,
    Failed,
}

#[derive(Debug, Clone, Serialize)]
pub struct Manifest {
    pub tool: &'static str,
    pub version: &'static str,
    pub core_version: &'static str,
    pub command: String,
    pub config: RunConfig,
    pub started_unix_ms: u128,
    pub finished_unix_ms: Option<u128>,
    pub status: RunStatus,
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
    pub files: Vec<String>,
    /// Experiment-specific summary values.
    pub summary: Value,
}

fn now_ms() -> u128 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_millis())
        .unwrap_or(0)
}

/// Formats a number for CSV output: shortest round-trip decimal.
pub fn num(x: f64) -> String {
    if x.is_nan() {
        "nan".into()
    } else if x.is_infinite() {
        if x > 0.0 { "inf".into() } else { "-inf".into() }
    } else {
        format!("{x:e}")
    }
}

/// A CSV table flushed after every row.
pub struct CsvTable {
    path: PathBuf,
    writer: csv::Writer<BufWriter<File>>,
}

impl CsvTable {
    pub fn row<I, S>(&mut self, cells: I) -> Result<(), StoreError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<[u8]>,
    {
        let path = self.path.clone();
        io(&path, self.writer.write_record(cells).map_err(into_io))?;
        io(&path, self.writer.flush())
    }
}

fn into_io(e: csv::Error) -> std::io::Error {
    std::io::Error::other(e.to_string())
}

pub struct ResultStore {
    dir: PathBuf,
    manifest: Manifest,
}

impl ResultStore {
    /// Creates the directory and writes the initial manifest.
    pub fn create(dir: &Path, command: &str, config: &RunConfig) -> Result<Self, StoreError> {
        io(dir, fs::create_dir_all(dir))?;
        let store = Self {
            dir: dir.to_path_buf(),
            manifest: Manifest {
                tool: "peaklab",
                version: env!("CARGO_PKG_VERSION"),
                core_version: peaklab::VERSION,
                command: command.to_string(),
                config: config.resolved(),
                started_unix_ms: now_ms(),
                finished_unix_ms: None,
                status: RunStatus::Running,
                errors: Vec::new(),
                warnings: Vec::new(),
                files: Vec::new(),
                summary: Value::Object(Default::default()),
            },
        };
        store.write_manifest()?;
        Ok(store)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn manifest(&self) -> &Manifest {
        &self.manifest
    }

    fn write_manifest(&self) -> Result<(), StoreError> {
        let path = self.dir.join("manifest.json");
        let tmp = self.dir.join("manifest.json.tmp");
        let text = serde_json::to_string_pretty(&self.manifest).expect("manifest serializes");
        io(&tmp, fs::write(&tmp, text + "\n"))?;
        io(&path, fs::rename(&tmp, &path))
    }

    fn register(&mut self, rel: &str) -> Result<(), StoreError> {
        if !self.manifest.files.iter().any(|f| f == rel) {
            self.manifest.files.push(rel.to_string());
            self.write_manifest()?;
        }
        Ok(())
    }

    /// Opens a CSV table with the given header.
    pub fn table(&mut self, name: &str, header: &[String]) -> Result<CsvTable, StoreError> {
        let rel = format!("{name}.csv");
        let path = self.dir.join(&rel);
        let file = io(&path, File::create(&path))?;
        let mut t = CsvTable {
            path: path.clone(),
            writer: csv::Writer::from_writer(BufWriter::new(file)),
        };
        t.row(header)?;
        self.register(&rel)?;
        Ok(t)
    }

    pub fn snapshot(&mut self, name: &str, field: &Field64) -> Result<(), StoreError> {
        let fields = self.dir.join("fields");
        io(&fields, fs::create_dir_all(&fields))?;
        let rel = format!("fields/{name}.field");
        let path = self.dir.join(&rel);
        io(&path, fs::write(&path, write_snapshot(name, field)))?;
        self.register(&rel)
    }

    pub fn json(&mut self, name: &str, value: &Value) -> Result<(), StoreError> {
        let rel = format!("{name}.json");
        let path = self.dir.join(&rel);
        let text = serde_json::to_string_pretty(value).expect("json serializes");
        io(&path, fs::write(&path, text + "\n"))?;
        self.register(&rel)
    }

    pub fn warn(&mut self, msg: String) -> Result<(), StoreError> {
        log::warn!("{msg}");
        self.manifest.warnings.push(msg);
        self.write_manifest()
    }

    pub fn set_summary(&mut self, key: &str, value: Value) -> Result<(), StoreError> {
        if let Value::Object(m) = &mut self.manifest.summary {
            m.insert(key.to_string(), value);
        }
        self.write_manifest()
    }

    /// Records the final status.
    pub fn finish(&mut self, status: RunStatus, error: Option<String>) -> Result<(), StoreError> {
        self.manifest.status = status;
        self.manifest.errors.extend(error);
        self.manifest.finished_unix_ms = Some(now_ms());
        self.write_manifest()
    }
}
