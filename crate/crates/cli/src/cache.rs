//! Content-addressed artifact cache with an append-only journal.
//!
//! Every artifact is a directory holding its files plus a `KEY` file. The
//! key is written last, and removed before any rewrite, so an interrupted
//! command leaves the artifact stale rather than corrupt.

use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{Duration, SystemTime, UNIX_EPOCH};

use xmarket::io::{atomic_write, hash_bytes};

use crate::error::{CliError, Result};

const KEY_FILE: &str = "KEY";
pub const JOURNAL_FILE: &str = "journal.tsv";

/// Hashes an ordered list of key components.
pub fn key_of(parts: &[&str]) -> String {
    let mut buf = String::new();
    for p in parts {
        buf.push_str(&p.len().to_string());
        buf.push(':');
        buf.push_str(p);
        buf.push('|');
    }
    hash_bytes(buf.as_bytes())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Hit,
    Computed,
}

impl Outcome {
    pub fn as_str(self) -> &'static str {
        match self {
            Outcome::Hit => "hit",
            Outcome::Computed => "computed",
        }
    }
}

/// One journal line.
#[derive(Debug, Clone, PartialEq)]
pub struct JournalEntry {
    pub time: u64,
    pub stage: String,
    pub artifact: String,
    pub outcome: String,
    pub key: String,
    pub seconds: f64,
    pub objective: Option<f64>,
}

pub struct Cache {
    root: PathBuf,
    journal: Mutex<()>,
}

impl Cache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into(), journal: Mutex::new(()) }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn dir(&self, stage: &str, name: &str) -> PathBuf {
        self.root.join(stage).join(name)
    }

    /// True if `dir` was committed under `key` and still holds `files`.
    pub fn is_fresh(&self, dir: &Path, key: &str, files: &[&str]) -> bool {
        match fs::read_to_string(dir.join(KEY_FILE)) {
            Ok(k) if k.trim() == key => files.iter().all(|f| dir.join(f).is_file()),
            _ => false,
        }
    }

    /// Invalidates `dir` before its files are rewritten.
    pub fn begin(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        match fs::remove_file(dir.join(KEY_FILE)) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(()),
            Err(e) => Err(CliError::io(dir.join(KEY_FILE), e)),
        }
    }

    pub fn commit(&self, dir: &Path, key: &str) -> Result<()> {
        atomic_write(&dir.join(KEY_FILE), key.as_bytes())?;
        Ok(())
    }

    pub fn record(&self, stage: &str, artifact: &str, key: &str, outcome: Outcome, took: Duration, objective: Option<f64>) -> Result<()> {
        let time = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let obj = objective.map_or_else(|| "-".to_string(), |o| format!("{o:.6}"));
        let line = format!(
            "{time}\t{stage}\t{artifact}\t{}\t{}\t{:.3}\t{obj}\n",
            outcome.as_str(),
            &key[..key.len().min(16)],
            took.as_secs_f64()
        );
        let path = self.root.join(JOURNAL_FILE);
        let _guard = self.journal.lock().unwrap_or_else(|p| p.into_inner());
        fs::create_dir_all(&self.root).map_err(|e| CliError::io(&self.root, e))?;
        let mut f = OpenOptions::new().create(true).append(true).open(&path).map_err(|e| CliError::io(&path, e))?;
        f.write_all(line.as_bytes()).map_err(|e| CliError::io(&path, e))?;
        log::info!("{stage} {artifact}: {} in {:.2}s", outcome.as_str(), took.as_secs_f64());
        Ok(())
    }

    pub fn read_journal(&self) -> Result<Vec<JournalEntry>> {
        let path = self.root.join(JOURNAL_FILE);
        let text = match fs::read_to_string(&path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(CliError::io(&path, e)),
        };
        let mut out = Vec::new();
        for line in text.lines().filter(|l| !l.is_empty()) {
            let f: Vec<&str> = line.split('\t').collect();
            if f.len() != 7 {
                continue;
            }
            out.push(JournalEntry {
                time: f[0].parse().unwrap_or(0),
                stage: f[1].into(),
                artifact: f[2].into(),
                outcome: f[3].into(),
                key: f[4].into(),
                seconds: f[5].parse().unwrap_or(0.0),
                objective: f[6].parse().ok(),
            });
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn key_components_are_delimited() {
        assert_ne!(key_of(&["ab", "c"]), key_of(&["a", "bc"]));
        assert_eq!(key_of(&["x"]), key_of(&["x"]));
    }

    #[test]
    fn commit_cycle() {
        let tmp = tempfile::tempdir().unwrap();
        let cache = Cache::new(tmp.path());
        let dir = cache.dir("stage", "a");
        assert!(!cache.is_fresh(&dir, "k1", &[]));
        cache.begin(&dir).unwrap();
        fs::write(dir.join("f"), "x").unwrap();
        cache.commit(&dir, "k1").unwrap();
        assert!(cache.is_fresh(&dir, "k1", &["f"]));
        assert!(!cache.is_fresh(&dir, "k2", &["f"]));
        assert!(!cache.is_fresh(&dir, "k1", &["g"]));
        cache.begin(&dir).unwrap();
        assert!(!cache.is_fresh(&dir, "k1", &["f"]));
    }

    #[test]
    fn journal_round_trip() {
        let tmp = tempfile::tempdir().unwrap();
        let cache = Cache::new(tmp.path());
        let key = key_of(&["z"]);
        cache.record("prepare", "t1", &key, Outcome::Hit, Duration::from_millis(5), None).unwrap();
        cache.record("stage1", "t1/als", &key, Outcome::Computed, Duration::from_secs(1), Some(0.25)).unwrap();
        let j = cache.read_journal().unwrap();
        assert_eq!(j.len(), 2);
        assert_eq!(j[0].outcome, "hit");
        assert_eq!(j[1].objective, Some(0.25));
    }
}
