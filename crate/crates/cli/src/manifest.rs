use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::CliError;

pub const MANIFEST: &str = "manifest.json";

/// What each stage read and wrote, by file hash, plus a short summary.
/// Paths are relative to the working directory so manifests compare
/// across directories.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<FileHash>,
    pub stages: BTreeMap<String, StageRecord>,
    /// Latest hash any stage wrote for each file.
    #[serde(default)]
    pub files: BTreeMap<String, String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileHash {
    pub path: String,
    pub sha256: String,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
    pub summary: serde_json::Value,
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path)
        .map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

impl RunManifest {
    pub fn load_or_default(dir: &Path) -> Result<Self, CliError> {
        let path = dir.join(MANIFEST);
        if !path.exists() {
            return Ok(Self::default());
        }
        let text = std::fs::read_to_string(&path)?;
        serde_json::from_str(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, dir: &Path) -> Result<(), CliError> {
        let mut text = serde_json::to_string_pretty(self).expect("manifest serializes");
        text.push('\n');
        std::fs::write(dir.join(MANIFEST), text)?;
        Ok(())
    }

    /// Inputs whose current hash differs from the one last written by a
    /// stage, i.e. files edited outside the pipeline.
    pub fn drifted(&self, inputs: &BTreeMap<String, String>) -> Vec<String> {
        inputs
            .iter()
            .filter(|(path, hash)| self.files.get(*path).is_some_and(|h| h != *hash))
            .map(|(path, _)| path.clone())
            .collect()
    }

    pub fn record(&mut self, name: String, record: StageRecord) {
        self.files.extend(record.outputs.iter().map(|(p, h)| (p.clone(), h.clone())));
        self.stages.insert(name, record);
    }
}
