//! Results directories, resolved configs and manifests.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::error::{HarnessError, HarnessResult};

pub const MANIFEST: &str = "manifest.json";
pub const RESOLVED_CONFIG: &str = "resolved_config.json";

/// A results directory being written by one command.
pub struct RunDir {
    path: PathBuf,
    command: String,
    seed: u64,
    started: Instant,
    started_at: String,
    files: Vec<String>,
}

impl RunDir {
    /// Creates `path`. An existing non-empty directory is an error unless
    /// `force` is set.
    pub fn create(path: &Path, force: bool, command: &str, seed: u64) -> HarnessResult<Self> {
        if path.exists() {
            let occupied = fs::read_dir(path)?.next().is_some();
            if occupied && !force {
                return Err(HarnessError::Config(format!(
                    "output directory {} is not empty (use --force to overwrite)",
                    path.display()
                )));
            }
        }
        fs::create_dir_all(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            command: command.to_string(),
            seed,
            started: Instant::now(),
            started_at: chrono::Utc::now().to_rfc3339(),
            files: Vec::new(),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn write_text(&mut self, name: &str, text: &str) -> HarnessResult<PathBuf> {
        let p = self.path.join(name);
        fs::write(&p, text)?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(p)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> HarnessResult<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write_text(name, &text)
    }

    /// Writes the manifest: command, version, seed, timing and a SHA-256
    /// of every file written.
    pub fn finish(mut self) -> HarnessResult<PathBuf> {
        let mut files = serde_json::Map::new();
        for name in &self.files {
            let bytes = fs::read(self.path.join(name))?;
            files.insert(name.clone(), sha256_hex(&bytes).into());
        }
        let manifest = serde_json::json!({
            "command": self.command,
            "code_version": env!("CARGO_PKG_VERSION"),
            "seed": self.seed,
            "started_at": self.started_at,
            "wall_time_s": self.started.elapsed().as_secs_f64(),
            "files": files,
        });
        self.files.clear();
        let text = serde_json::to_string_pretty(&manifest)? + "\n";
        let p = self.path.join(MANIFEST);
        fs::write(&p, text)?;
        Ok(p)
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}
