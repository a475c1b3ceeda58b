//! Run manifests: config hash, timings, suite status and file checksums.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::hex;
use crate::suites::{SuiteOutcome, SuiteStatus};

pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FileEntry {
    /// Path relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub config_hash: String,
    pub toolkit_version: String,
    pub started_unix: u64,
    pub wall_clock_seconds: f64,
    /// `false` until the run finishes; an interrupted run keeps `false`.
    pub complete: bool,
    pub error: Option<String>,
    pub suites: Vec<SuiteOutcome>,
    pub files: Vec<FileEntry>,
}

pub fn sha256_file(path: &Path) -> io::Result<String> {
    let bytes = fs::read(path)?;
    Ok(hex(&Sha256::digest(&bytes)))
}

/// Writes the manifest after every state change so that an interrupted run
/// leaves a valid file behind.
pub struct ManifestWriter {
    dir: PathBuf,
    clock: Instant,
    pub manifest: RunManifest,
}

impl ManifestWriter {
    pub fn create(dir: &Path, command: &str, config_hash: &str) -> io::Result<Self> {
        fs::create_dir_all(dir)?;
        let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
        let mut w = Self {
            dir: dir.to_path_buf(),
            clock: Instant::now(),
            manifest: RunManifest {
                command: command.into(),
                config_hash: config_hash.into(),
                toolkit_version: env!("CARGO_PKG_VERSION").into(),
                started_unix: started,
                wall_clock_seconds: 0.0,
                complete: false,
                error: None,
                suites: Vec::new(),
                files: Vec::new(),
            },
        };
        w.flush()?;
        Ok(w)
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn set_suites(&mut self, suites: &[SuiteOutcome]) -> io::Result<()> {
        self.manifest.suites = suites.to_vec();
        self.flush()
    }

    /// Registers a file written below the output directory.
    pub fn record(&mut self, relative: &str) -> io::Result<()> {
        let path = self.dir.join(relative);
        let bytes = fs::metadata(&path)?.len();
        let sha256 = sha256_file(&path)?;
        self.manifest.files.retain(|f| f.path != relative);
        self.manifest.files.push(FileEntry { path: relative.into(), bytes, sha256 });
        self.manifest.files.sort_by(|a, b| a.path.cmp(&b.path));
        self.flush()
    }

    /// Writes `contents` to `relative` and records it.
    pub fn write_file(&mut self, relative: &str, contents: &[u8]) -> io::Result<()> {
        fs::write(self.dir.join(relative), contents)?;
        self.record(relative)
    }

    pub fn fail(&mut self, message: &str) -> io::Result<()> {
        self.manifest.error = Some(message.into());
        self.flush()
    }

    pub fn finish(mut self) -> io::Result<RunManifest> {
        self.manifest.complete = true;
        self.flush()?;
        Ok(self.manifest)
    }

    fn flush(&mut self) -> io::Result<()> {
        self.manifest.wall_clock_seconds = self.clock.elapsed().as_secs_f64();
        let text = serde_json::to_string_pretty(&self.manifest).map_err(io::Error::other)?;
        let tmp = self.dir.join(format!("{MANIFEST_FILE}.tmp"));
        fs::write(&tmp, text)?;
        fs::rename(tmp, self.dir.join(MANIFEST_FILE))
    }
}

impl RunManifest {
    pub fn load(dir: &Path) -> io::Result<Self> {
        let text = fs::read_to_string(dir.join(MANIFEST_FILE))?;
        serde_json::from_str(&text).map_err(io::Error::other)
    }

    /// True only for a finished run whose suites all passed.
    pub fn all_passed(&self) -> bool {
        self.complete && self.error.is_none() && self.suites.iter().all(|s| s.status == SuiteStatus::Pass)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn interrupted_run_is_not_a_pass() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = ManifestWriter::create(dir.path(), "accept", "abc").unwrap();
        w.write_file("a.csv", b"x\n1\n").unwrap();
        let m = RunManifest::load(dir.path()).unwrap();
        assert!(!m.complete);
        assert!(!m.all_passed());
        assert_eq!(m.files.len(), 1);
        assert_eq!(m.files[0].sha256, sha256_file(&dir.path().join("a.csv")).unwrap());
        let done = w.finish().unwrap();
        assert!(done.all_passed());
    }
}
