use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use cfsd::train::config_hash;
use cfsd::{Error, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Record of one command invocation. Artifact paths are relative to the
/// output directory so identical runs produce identical manifests.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub tool_version: String,
    pub config: serde_json::Value,
    pub config_hash: String,
    /// SHA-256 of the input dataset file, if the command reads one.
    pub dataset_fingerprint: Option<String>,
    pub seeds: Vec<u64>,
    pub artifacts: BTreeMap<String, PathBuf>,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize) -> Result<Self> {
        let config = serde_json::to_value(config)?;
        Ok(RunManifest {
            command: command.to_string(),
            tool_version: env!("CARGO_PKG_VERSION").to_string(),
            config_hash: config_hash(&config)?,
            config,
            dataset_fingerprint: None,
            seeds: Vec::new(),
            artifacts: BTreeMap::new(),
        })
    }

    pub fn artifact(&mut self, name: &str, file: impl Into<PathBuf>) {
        self.artifacts.insert(name.to_string(), file.into());
    }

    /// Checks that the recorded hash matches the recorded config and that
    /// every artifact exists under `dir`.
    pub fn verify(&self, dir: &Path) -> Result<()> {
        if config_hash(&self.config)? != self.config_hash {
            return Err(Error::Checkpoint("manifest config hash mismatch".into()));
        }
        for (name, p) in &self.artifacts {
            if !dir.join(p).exists() {
                return Err(Error::InvalidArgument(format!("artifact {name} missing: {}", p.display())));
            }
        }
        Ok(())
    }

    /// Verifies, then writes `<command>.manifest.json` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<PathBuf> {
        self.verify(dir)?;
        let path = dir.join(format!("{}.manifest.json", self.command));
        let text = serde_json::to_string_pretty(self)?;
        fs::write(&path, text + "\n").map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }
}

pub fn fingerprint(path: &Path) -> Result<String> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}
