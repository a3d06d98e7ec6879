use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct OutputFile {
    /// Path relative to the output directory.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Everything needed to re-run a command and check its outputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// Arguments after the program name, with the seed made explicit.
    pub argv: Vec<String>,
    pub config: serde_json::Value,
    pub seed: Option<u64>,
    pub version: String,
    pub started_unix: u64,
    pub finished_unix: u64,
    pub outputs: Vec<OutputFile>,
}

impl RunManifest {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text =
            fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Recomputes every digest against the files under `dir`; returns the
    /// paths that differ or are missing.
    pub fn verify(&self, dir: &Path) -> Vec<String> {
        self.outputs
            .iter()
            .filter(|o| match fs::read(dir.join(&o.path)) {
                Ok(bytes) => sha256_hex(&bytes) != o.sha256,
                Err(_) => true,
            })
            .map(|o| o.path.clone())
            .collect()
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    format!("{:x}", Sha256::digest(bytes))
}

pub(crate) fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_secs())
}

/// Seed from the flag, or a fresh one from the operating system.
pub(crate) fn resolve_seed(flag: Option<u64>) -> u64 {
    flag.unwrap_or_else(rand::random)
}

/// `argv` with an explicit `--seed`.
pub(crate) fn replay_argv(argv: &[String], seed: u64) -> Vec<String> {
    let has_seed = argv
        .iter()
        .any(|a| a == "--seed" || a.starts_with("--seed="));
    let mut out = argv.to_vec();
    if !has_seed {
        out.push("--seed".into());
        out.push(seed.to_string());
    }
    out
}

/// Output directory that remembers what was written into it.
pub(crate) struct OutputDir {
    root: PathBuf,
    written: Vec<String>,
    started: u64,
}

impl OutputDir {
    pub fn create(root: &Path) -> Result<Self> {
        fs::create_dir_all(root).with_context(|| format!("creating {}", root.display()))?;
        Ok(OutputDir {
            root: root.to_path_buf(),
            written: Vec::new(),
            started: unix_now(),
        })
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<PathBuf> {
        let path = self.path(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        if !self.written.iter().any(|w| w == name) {
            self.written.push(name.to_string());
        }
        Ok(path)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<PathBuf> {
        let mut text = serde_json::to_string_pretty(value)?;
        text.push('\n');
        self.write(name, text.as_bytes())
    }

    /// Digests every written file and stores `manifest_<command>.json`.
    pub fn finish(
        self,
        command: &str,
        argv: Vec<String>,
        config: serde_json::Value,
        seed: Option<u64>,
    ) -> Result<RunManifest> {
        let outputs = self
            .written
            .iter()
            .map(|name| {
                let bytes = fs::read(self.root.join(name))?;
                Ok(OutputFile {
                    path: name.clone(),
                    bytes: bytes.len() as u64,
                    sha256: sha256_hex(&bytes),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        let manifest = RunManifest {
            command: command.to_string(),
            argv,
            config,
            seed,
            version: env!("CARGO_PKG_VERSION").to_string(),
            started_unix: self.started,
            finished_unix: unix_now(),
            outputs,
        };
        let path = self.root.join(format!("manifest_{command}.json"));
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?;
        Ok(manifest)
    }
}
