//! Output directory bookkeeping and the run manifest.
//!
//! Each file is written to a temporary name and renamed into place; the
//! manifest is written last the same way, so a directory with a manifest
//! always holds a complete run.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use chrono::{DateTime, SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};

use crate::run::CliError;

pub const MANIFEST_NAME: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputEntry {
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_source: String,
    /// Config after overrides and defaults.
    pub config: Value,
    pub started_at: String,
    pub finished_at: String,
    pub outputs: Vec<OutputEntry>,
}

fn timestamp(t: DateTime<Utc>) -> String {
    t.to_rfc3339_opts(SecondsFormat::Millis, true)
}

fn io_error(path: &Path, e: io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let tmp = path.with_extension(format!(
        "{}.partial",
        path.extension().and_then(|e| e.to_str()).unwrap_or("")
    ));
    fs::write(&tmp, bytes).map_err(|e| io_error(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| io_error(path, e))
}

/// An output directory being filled by one run.
#[derive(Debug)]
pub struct OutputDir {
    root: PathBuf,
    started: DateTime<Utc>,
    files: Vec<String>,
}

impl OutputDir {
    /// Creates `root` if needed. A directory left by an earlier run is
    /// cleared of that run's outputs; anything else in it is refused so the
    /// new inventory can match the directory exactly.
    pub fn prepare(root: &Path) -> Result<Self, CliError> {
        fs::create_dir_all(root).map_err(|e| io_error(root, e))?;
        let previous: Vec<String> = match fs::read(root.join(MANIFEST_NAME)) {
            Ok(bytes) => serde_json::from_slice::<RunManifest>(&bytes)
                .map(|m| m.outputs.into_iter().map(|o| o.path).collect())
                .map_err(|e| CliError::OutputDir(format!("unreadable {MANIFEST_NAME}: {e}")))?,
            Err(e) if e.kind() == io::ErrorKind::NotFound => Vec::new(),
            Err(e) => return Err(io_error(&root.join(MANIFEST_NAME), e)),
        };
        let entries = fs::read_dir(root).map_err(|e| io_error(root, e))?;
        let mut stale = Vec::new();
        for entry in entries {
            let entry = entry.map_err(|e| io_error(root, e))?;
            let name = entry.file_name().to_string_lossy().into_owned();
            if name == MANIFEST_NAME || previous.contains(&name) {
                stale.push(entry.path());
            } else {
                return Err(CliError::OutputDir(format!(
                    "{} contains `{name}`, which no earlier run wrote",
                    root.display()
                )));
            }
        }
        for path in stale {
            fs::remove_file(&path).map_err(|e| io_error(&path, e))?;
        }
        Ok(Self {
            root: root.to_path_buf(),
            started: Utc::now(),
            files: Vec::new(),
        })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        write_atomic(&self.root.join(name), bytes)?;
        log::info!("wrote {}", self.root.join(name).display());
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(())
    }

    pub fn write_json(&mut self, name: &str, value: &impl Serialize) -> Result<(), CliError> {
        let mut bytes = serde_json::to_vec_pretty(value).expect("serialisable output");
        bytes.push(b'\n');
        self.write(name, &bytes)
    }

    /// Hashes every output and writes the manifest.
    pub fn finish(self, command: &str, config_source: &str, config: Value) -> Result<RunManifest, CliError> {
        let mut outputs = Vec::with_capacity(self.files.len());
        for name in &self.files {
            let path = self.root.join(name);
            let bytes = fs::read(&path).map_err(|e| io_error(&path, e))?;
            outputs.push(OutputEntry {
                path: name.clone(),
                bytes: bytes.len() as u64,
                sha256: hex::encode(Sha256::digest(&bytes)),
            });
        }
        let manifest = RunManifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            command: command.to_string(),
            config_source: config_source.to_string(),
            config,
            started_at: timestamp(self.started),
            finished_at: timestamp(Utc::now()),
            outputs,
        };
        let mut bytes = serde_json::to_vec_pretty(&manifest).expect("serialisable manifest");
        bytes.push(b'\n');
        write_atomic(&self.root.join(MANIFEST_NAME), &bytes)?;
        Ok(manifest)
    }
}
