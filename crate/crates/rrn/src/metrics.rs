//! Line-delimited JSON metrics.
//!
//! `metrics.jsonl` holds one [`MetricsRecord`] per evaluation event and is a
//! pure function of (config, seed). Wall-clock seconds go to the sidecar
//! `timing.jsonl` ([`TimingRecord`]) so repeated runs stay byte-identical.

use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    /// Updates completed when the evaluation ran.
    pub update: u64,
    pub seed: u64,
    /// Per-step training losses `l^1..l^T` of the last batch.
    pub losses: Vec<f64>,
    pub split: String,
    /// `puzzle_accuracy`, `question_accuracy`, `age_accuracy` or `babi_error`.
    pub metric_name: String,
    /// Metric at the evaluation step count.
    pub metric: f64,
    /// Accuracy after `t` steps, `t = 0..=T'`.
    pub step_accuracy: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub update: u64,
    pub seconds: f64,
}

/// Appends JSON lines to a file.
pub struct JsonlWriter {
    path: PathBuf,
    file: File,
}

impl JsonlWriter {
    pub fn append(path: &Path) -> Result<Self> {
        let file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        Ok(JsonlWriter {
            path: path.to_path_buf(),
            file,
        })
    }

    pub fn write<T: Serialize>(&mut self, record: &T) -> Result<()> {
        let line = serde_json::to_string(record).map_err(|e| Error::runtime(e.to_string()))?;
        writeln!(self.file, "{line}").map_err(|e| Error::io(&self.path, e))?;
        self.file.flush().map_err(|e| Error::io(&self.path, e))
    }
}

pub fn read_records<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(
            serde_json::from_str(&line)
                .map_err(|e| Error::runtime(format!("{}:{}: {e}", path.display(), n + 1)))?,
        );
    }
    Ok(out)
}

/// Drops records past `update` so a resumed run continues the stream
/// without duplicates.
pub fn truncate_after(path: &Path, update: u64) -> Result<()> {
    if !path.exists() {
        return Ok(());
    }
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut kept = String::new();
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        let v: serde_json::Value = serde_json::from_str(line).map_err(|e| Error::runtime(e.to_string()))?;
        if v.get("update").and_then(serde_json::Value::as_u64).is_some_and(|u| u <= update) {
            kept.push_str(line);
            kept.push('\n');
        }
    }
    std::fs::write(path, kept).map_err(|e| Error::io(path, e))
}
