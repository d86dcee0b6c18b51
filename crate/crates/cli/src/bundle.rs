//! Output directories with a provenance manifest.
//!
//! Every command writes its artifacts through a [`Bundle`]; `manifest.json`
//! lists each artifact with its SHA-256, the fingerprint of the resolved
//! configuration (stored as `config.json`), the seeds used and a timestamp.
//! The timestamp is the only field that varies between identical runs.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use cohortlab_core::fingerprint::{fingerprint, sha256_hex};
use serde::{Deserialize, Serialize};

use crate::error::CliError;
use crate::io::{read_json, to_json_bytes};

pub const MANIFEST: &str = "manifest.json";
pub const CONFIG: &str = "config.json";
pub const TOOL: &str = "cohortlab";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub tool: String,
    pub version: String,
    pub command: String,
    pub config_fingerprint: String,
    pub seeds: BTreeMap<String, u64>,
    pub created_unix: u64,
    /// Relative path to SHA-256 of the file contents.
    pub artifacts: BTreeMap<String, String>,
}

pub struct Bundle {
    dir: PathBuf,
    command: String,
    artifacts: BTreeMap<String, String>,
    seeds: BTreeMap<String, u64>,
}

impl Bundle {
    pub fn create(dir: &Path, command: &str) -> Result<Self, CliError> {
        fs::create_dir_all(dir).map_err(|e| CliError::Internal(format!("{}: {e}", dir.display())))?;
        Ok(Self { dir: dir.to_path_buf(), command: command.into(), artifacts: BTreeMap::new(), seeds: BTreeMap::new() })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn seed(&mut self, name: &str, seed: u64) {
        self.seeds.insert(name.into(), seed);
    }

    /// Writes `bytes` to `name` (a relative path, `/`-separated) and records
    /// its hash.
    pub fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| CliError::Internal(format!("{}: {e}", parent.display())))?;
        }
        fs::write(&path, bytes).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
        self.artifacts.insert(name.into(), sha256_hex(bytes));
        Ok(())
    }

    pub fn json<T: Serialize + ?Sized>(&mut self, name: &str, value: &T) -> Result<(), CliError> {
        self.write(name, &to_json_bytes(value))
    }

    /// Stores `config` as `config.json` and writes the manifest.
    pub fn finish<T: Serialize + ?Sized>(mut self, config: &T) -> Result<Manifest, CliError> {
        self.json(CONFIG, config)?;
        let manifest = Manifest {
            tool: TOOL.into(),
            version: env!("CARGO_PKG_VERSION").into(),
            command: self.command,
            config_fingerprint: fingerprint(config),
            seeds: self.seeds,
            created_unix: SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0),
            artifacts: self.artifacts,
        };
        let path = self.dir.join(MANIFEST);
        fs::write(&path, to_json_bytes(&manifest)).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
        Ok(manifest)
    }
}

/// Loads the manifest of `dir` and checks every artifact hash and the
/// configuration fingerprint.
pub fn verify(dir: &Path) -> Result<Manifest, CliError> {
    let path = dir.join(MANIFEST);
    if !path.is_file() {
        return Err(CliError::MissingArtifact(path));
    }
    let manifest: Manifest = read_json(&path)?;
    for (name, expected) in &manifest.artifacts {
        let p = dir.join(name);
        let bytes = fs::read(&p).map_err(|_| CliError::MissingArtifact(p.clone()))?;
        let found = sha256_hex(&bytes);
        if &found != expected {
            return Err(CliError::FingerprintMismatch { artifact: name.clone(), expected: expected.clone(), found });
        }
    }
    let config: serde_json::Value = read_json(&dir.join(CONFIG))?;
    let found = fingerprint(&config);
    if found != manifest.config_fingerprint {
        return Err(CliError::FingerprintMismatch {
            artifact: CONFIG.into(),
            expected: manifest.config_fingerprint.clone(),
            found,
        });
    }
    Ok(manifest)
}
