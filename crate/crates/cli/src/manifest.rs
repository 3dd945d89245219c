//! Append-only JSON-lines record of every stage run.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileHash {
    /// Relative to the output directory.
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub stage: String,
    /// Artifact namespace of this run, e.g. `TOK-1st/MR-0`.
    pub key: String,
    /// Hash of stage, key, config and input hashes; equal fingerprints mean the
    /// stage would reproduce the same outputs.
    pub fingerprint: String,
    pub config_sha256: String,
    pub inputs: Vec<FileHash>,
    pub outputs: Vec<FileHash>,
    pub elapsed_ms: u64,
}

#[derive(Debug, Clone, Default)]
pub struct Manifest {
    path: PathBuf,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    /// Reads `path` if it exists; a missing file is an empty manifest.
    pub fn open(path: &Path) -> Result<Self> {
        let mut entries = Vec::new();
        if path.exists() {
            let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            for (i, line) in text.lines().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                let e = serde_json::from_str(line).with_context(|| format!("{} line {}", path.display(), i + 1))?;
                entries.push(e);
            }
        }
        Ok(Manifest { path: path.to_path_buf(), entries })
    }

    pub fn append(&mut self, entry: ManifestEntry) -> Result<()> {
        if let Some(dir) = self.path.parent() {
            fs::create_dir_all(dir)?;
        }
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .with_context(|| format!("opening {}", self.path.display()))?;
        let mut line = serde_json::to_string(&entry)?;
        line.push('\n');
        f.write_all(line.as_bytes())?;
        f.sync_all()?;
        self.entries.push(entry);
        Ok(())
    }

    /// Most recent run of `key`.
    pub fn latest(&self, key: &str) -> Option<&ManifestEntry> {
        self.entries.iter().rev().find(|e| e.key == key)
    }

    /// Hash recorded for `path` by the most recent stage that wrote it.
    pub fn producer_of(&self, path: &str) -> Option<(&ManifestEntry, &FileHash)> {
        self.entries.iter().rev().find_map(|e| e.outputs.iter().find(|o| o.path == path).map(|o| (e, o)))
    }

    /// `(path, sha256)` of every output, latest run of each key, sorted by path.
    pub fn output_hashes(&self) -> Vec<(String, String)> {
        let mut keys: Vec<&str> = self.entries.iter().map(|e| e.key.as_str()).collect();
        keys.sort_unstable();
        keys.dedup();
        let mut out: Vec<(String, String)> = keys
            .into_iter()
            .filter_map(|k| self.latest(k))
            .flat_map(|e| e.outputs.iter().map(|o| (o.path.clone(), o.sha256.clone())))
            .collect();
        out.sort();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn entry(key: &str, out: &str, hash: &str) -> ManifestEntry {
        ManifestEntry {
            stage: "s".into(),
            key: key.into(),
            fingerprint: "f".into(),
            config_sha256: "c".into(),
            inputs: vec![],
            outputs: vec![FileHash { path: out.into(), sha256: hash.into() }],
            elapsed_ms: 1,
        }
    }

    #[test]
    fn append_and_reopen() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.jsonl");
        let mut m = Manifest::open(&p).unwrap();
        m.append(entry("a", "x", "1")).unwrap();
        m.append(entry("b", "y", "2")).unwrap();
        m.append(entry("a", "x", "3")).unwrap();
        let again = Manifest::open(&p).unwrap();
        assert_eq!(again.entries.len(), 3);
        assert_eq!(again.latest("a").unwrap().outputs[0].sha256, "3");
        assert_eq!(again.producer_of("y").unwrap().1.sha256, "2");
        assert_eq!(again.output_hashes(), vec![("x".into(), "3".into()), ("y".into(), "2".into())]);
    }

    #[test]
    fn corrupt_lines_are_reported() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("manifest.jsonl");
        fs::write(&p, "{not json}\n").unwrap();
        let err = Manifest::open(&p).unwrap_err();
        assert!(format!("{err:#}").contains("line 1"));
    }
}
