//! Run manifests and atomic artifact writes.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Json,
    Csv,
}

/// Provenance record embedded in every artifact.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// `dataset:<name>` or the input path.
    pub source: Option<String>,
    pub gammas: Vec<f64>,
    pub options: BTreeMap<String, String>,
    pub tool_version: String,
    /// Seconds since the Unix epoch.
    pub timestamp: u64,
}

impl RunManifest {
    pub fn new(command: &str, source: Option<String>, gammas: Vec<f64>, options: BTreeMap<String, String>) -> Self {
        Self {
            command: command.to_string(),
            source,
            gammas,
            options,
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs()),
        }
    }
}

/// JSON document `{"manifest": ..., <body fields>}`.
pub fn json_artifact<B: Serialize>(manifest: &RunManifest, body: &B) -> Result<String> {
    let mut value = serde_json::to_value(body)?;
    let obj = value.as_object_mut().context("artifact body must be a JSON object")?;
    obj.insert("manifest".into(), serde_json::to_value(manifest)?);
    Ok(serde_json::to_string_pretty(&value)? + "\n")
}

/// CSV with the manifest as a leading `# manifest: {json}` comment line.
pub fn csv_artifact<R: Serialize>(manifest: &RunManifest, rows: &[R]) -> Result<String> {
    let mut wtr = csv::Writer::from_writer(Vec::new());
    for r in rows {
        wtr.serialize(r)?;
    }
    let body = String::from_utf8(wtr.into_inner().map_err(|e| e.into_error())?)?;
    Ok(format!("# manifest: {}\n{body}", serde_json::to_string(manifest)?))
}

/// Writes `contents` to `path` via a temporary file in the same directory
/// and a rename, or to stdout when `path` is `None`.
pub fn emit(path: Option<&Path>, contents: &str) -> Result<()> {
    let Some(path) = path else {
        std::io::stdout().write_all(contents.as_bytes())?;
        return Ok(());
    };
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => Path::new("."),
    };
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(contents.as_bytes())?;
    tmp.as_file().sync_all()?;
    tmp.persist(path).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}
