//! Stage records (`pipeline.json`) and file helpers.
//!
//! Every output file is a pure function of its inputs. Wall-clock timings
//! and input fingerprints live only in `pipeline.json`, which is the one
//! file allowed to differ between reruns.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use boltrm_core::seed::sha256_hex;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};

pub const PIPELINE_FILE: &str = "pipeline.json";
pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub tool_version: String,
    /// SHA-256 of the stage settings plus every input file.
    pub input_fingerprint: String,
    /// Output file name → SHA-256.
    pub outputs: BTreeMap<String, String>,
    pub wall_clock_ms: u64,
}

/// Collects the stage settings and input hashes that decide whether a
/// stage must run again.
#[derive(Debug, Default)]
pub struct Fingerprint {
    parts: Vec<String>,
}

impl Fingerprint {
    pub fn new(stage: &str) -> Self {
        Self {
            parts: vec![format!("stage={stage}"), format!("tool={TOOL_VERSION}")],
        }
    }

    pub fn value<T: Serialize>(mut self, key: &str, value: &T) -> Self {
        let json = serde_json::to_string(value).expect("settings serialize");
        self.parts.push(format!("{key}={json}"));
        self
    }

    pub fn file(mut self, path: &Path) -> CliResult<Self> {
        let bytes = read(path)?;
        let name = path.file_name().map(|n| n.to_string_lossy().into_owned()).unwrap_or_default();
        self.parts.push(format!("file {name}={}", sha256_hex(&bytes)));
        Ok(self)
    }

    pub fn finish(&self) -> String {
        sha256_hex(self.parts.join("\n").as_bytes())
    }
}

pub fn read(path: &Path) -> CliResult<Vec<u8>> {
    fs::read(path).map_err(|e| CliError::io(path, e))
}

pub fn write(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| CliError::io(parent, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(CliError::runtime)?;
    text.push('\n');
    write(path, text.as_bytes())
}

pub fn read_json<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let bytes = read(path)?;
    serde_json::from_slice(&bytes).map_err(|e| CliError::integrity(format!("{}: {e}", path.display())))
}

/// Fails with an integrity error when the file's hash is not `expected`.
pub fn read_verified(path: &Path, expected: &str) -> CliResult<Vec<u8>> {
    let bytes = read(path)?;
    let actual = sha256_hex(&bytes);
    if actual != expected {
        return Err(CliError::integrity(format!(
            "{}: sha256 {actual} does not match manifest {expected}",
            path.display()
        )));
    }
    Ok(bytes)
}

fn load_records(dir: &Path) -> BTreeMap<String, StageRecord> {
    read_json(&dir.join(PIPELINE_FILE)).unwrap_or_default()
}

/// True when `dir` already holds this stage's outputs for the same inputs.
pub fn up_to_date(dir: &Path, stage: &str, fingerprint: &str) -> bool {
    let records = load_records(dir);
    let Some(record) = records.get(stage) else {
        return false;
    };
    if record.input_fingerprint != fingerprint || record.tool_version != TOOL_VERSION {
        return false;
    }
    record
        .outputs
        .iter()
        .all(|(name, sha)| fs::read(dir.join(name)).is_ok_and(|b| &sha256_hex(&b) == sha))
}

/// Hashes the named outputs and stores the stage's entry in `pipeline.json`
/// (one entry per stage sharing the directory).
pub fn record(dir: &Path, stage: &str, fingerprint: &str, outputs: &[PathBuf], elapsed: Duration) -> CliResult<()> {
    let mut hashes = BTreeMap::new();
    for path in outputs {
        let rel = path.strip_prefix(dir).unwrap_or(path).to_string_lossy().into_owned();
        hashes.insert(rel, sha256_hex(&read(path)?));
    }
    let mut records = load_records(dir);
    records.insert(
        stage.to_string(),
        StageRecord {
            stage: stage.to_string(),
            tool_version: TOOL_VERSION.to_string(),
            input_fingerprint: fingerprint.to_string(),
            outputs: hashes,
            wall_clock_ms: elapsed.as_millis() as u64,
        },
    );
    write_json(&dir.join(PIPELINE_FILE), &records)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scratch(name: &str) -> PathBuf {
        let dir = std::env::temp_dir().join(format!("boltrm-manifest-{name}-{}", std::process::id()));
        let _ = fs::remove_dir_all(&dir);
        dir
    }

    #[test]
    fn record_round_trips_and_detects_changes() {
        let dir = scratch("record");
        let out = dir.join("a.txt");
        write(&out, b"hello").unwrap();
        let fp = Fingerprint::new("demo").value("k", &3).finish();
        record(&dir, "demo", &fp, &[out.clone()], Duration::from_millis(5)).unwrap();
        let back: BTreeMap<String, StageRecord> = read_json(&dir.join(PIPELINE_FILE)).unwrap();
        assert_eq!(back["demo"].outputs["a.txt"], sha256_hex(b"hello"));
        record(&dir, "second", "fp2", &[out.clone()], Duration::ZERO).unwrap();
        assert!(up_to_date(&dir, "demo", &fp));
        assert!(!up_to_date(&dir, "other", &fp));
        assert!(!up_to_date(&dir, "demo", &Fingerprint::new("demo").value("k", &4).finish()));
        write(&out, b"tampered").unwrap();
        assert!(!up_to_date(&dir, "demo", &fp));
        fs::remove_dir_all(&dir).unwrap();
    }

    #[test]
    fn verified_read_rejects_mismatch() {
        let dir = scratch("verify");
        let path = dir.join("x.bin");
        write(&path, &[1, 2, 3]).unwrap();
        assert!(read_verified(&path, &sha256_hex(&[1, 2, 3])).is_ok());
        let err = read_verified(&path, &sha256_hex(&[9])).unwrap_err();
        assert_eq!(err.code(), 3);
        fs::remove_dir_all(&dir).unwrap();
    }
}
