//! Artifact staging: every file of a run lands in a temporary directory that
//! is renamed into place once the manifest is written.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::error::CliError;

pub const OUTPUT_ROOT_ENV: &str = "CORERAD_OUTPUT_ROOT";

/// Hex sha256 of the config in canonical form (sorted keys, compact).
pub fn config_hash(raw: &Value) -> String {
    let canonical = serde_json::to_vec(raw).expect("json values serialize");
    hex(&Sha256::digest(&canonical))
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Formats a float so that it parses back to the same value.
pub fn num(v: f64) -> String {
    format!("{v:?}")
}

pub fn opt(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

/// CSV table built in memory.
pub struct Table {
    w: csv::Writer<Vec<u8>>,
}

impl Table {
    pub fn new<S: AsRef<str>>(header: &[S]) -> Result<Self, CliError> {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(header.iter().map(|s| s.as_ref()))?;
        Ok(Table { w })
    }

    pub fn row<S: AsRef<str>>(&mut self, fields: &[S]) -> Result<(), CliError> {
        self.w.write_record(fields.iter().map(|s| s.as_ref()))?;
        Ok(())
    }

    pub fn finish(self) -> Result<Vec<u8>, CliError> {
        self.w.into_inner().map_err(|e| CliError::runtime(format!("csv: {}", e.error())))
    }
}

/// Files produced by a job plus a JSON summary for the manifest.
#[derive(Default)]
pub struct JobOutput {
    pub files: Vec<(String, Vec<u8>)>,
    pub summary: Value,
    /// Set when the job ran but its own checks failed.
    pub failure: Option<String>,
}

impl JobOutput {
    pub fn add(&mut self, name: impl Into<String>, bytes: Vec<u8>) {
        self.files.push((name.into(), bytes));
    }

    pub fn add_json<T: Serialize>(&mut self, name: impl Into<String>, value: &T) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.add(name, bytes);
        Ok(())
    }
}

#[derive(Debug, Serialize)]
pub struct ArtifactEntry {
    pub name: String,
    pub bytes: usize,
    pub sha256: String,
}

#[derive(Debug, Serialize)]
pub struct Manifest<'a> {
    pub tool_version: &'static str,
    pub kind: &'static str,
    pub config_hash: &'a str,
    pub started_at: String,
    pub wall_seconds: f64,
    pub threads: usize,
    pub config: &'a Value,
    pub artifacts: Vec<ArtifactEntry>,
    pub summary: &'a Value,
}

/// Resolves the configured output directory against the override root.
pub fn output_base(output_dir: &Path) -> PathBuf {
    match std::env::var_os(OUTPUT_ROOT_ENV) {
        Some(root) if !root.is_empty() => PathBuf::from(root).join(output_dir),
        _ => output_dir.to_path_buf(),
    }
}

/// Writes the files and the manifest under `base/<run_name>/`, replacing an
/// earlier run of the same config.
pub fn commit(base: &Path, run_name: &str, files: &[(String, Vec<u8>)], manifest: impl FnOnce(Vec<ArtifactEntry>) -> Result<Vec<u8>, CliError>) -> Result<PathBuf, CliError> {
    fs::create_dir_all(base)?;
    let stage = tempfile::Builder::new().prefix(".staging-").tempdir_in(base)?;
    let mut entries = Vec::with_capacity(files.len());
    for (name, bytes) in files {
        let path = stage.path().join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes)?;
        entries.push(ArtifactEntry { name: name.clone(), bytes: bytes.len(), sha256: hex(&Sha256::digest(bytes)) });
    }
    fs::write(stage.path().join("manifest.json"), manifest(entries)?)?;
    let target = base.join(run_name);
    if target.exists() {
        fs::remove_dir_all(&target)?;
    }
    let staged = stage.keep();
    if let Err(e) = fs::rename(&staged, &target) {
        let _ = fs::remove_dir_all(&staged);
        return Err(e.into());
    }
    Ok(target)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hash_ignores_key_order() {
        let a: Value = serde_json::from_str(r#"{"a": 1, "b": [1, 2]}"#).unwrap();
        let b: Value = serde_json::from_str(r#"{"b": [1, 2], "a": 1}"#).unwrap();
        assert_eq!(config_hash(&a), config_hash(&b));
        assert_eq!(config_hash(&a).len(), 64);
    }

    #[test]
    fn numbers_round_trip() {
        for v in [0.1, 1.0 / 3.0, 1e-300, 4.0 * std::f64::consts::PI] {
            assert_eq!(num(v).parse::<f64>().unwrap(), v);
        }
    }

    #[test]
    fn commit_replaces_previous_run() {
        let dir = tempfile::tempdir().unwrap();
        let files = vec![("a.csv".to_string(), b"x\n1\n".to_vec())];
        let p = commit(dir.path(), "run", &files, |e| Ok(serde_json::to_vec(&e).unwrap())).unwrap();
        assert!(p.join("a.csv").exists());
        let files = vec![("b.csv".to_string(), b"y\n".to_vec())];
        commit(dir.path(), "run", &files, |_| Ok(b"{}".to_vec())).unwrap();
        assert!(!p.join("a.csv").exists());
        assert!(p.join("b.csv").exists());
        let leftovers = fs::read_dir(dir.path()).unwrap().count();
        assert_eq!(leftovers, 1);
    }
}
