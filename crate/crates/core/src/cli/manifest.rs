use std::fs::OpenOptions;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileDigest {
    pub path: PathBuf,
    pub sha256: String,
}

/// One line of the append-only manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub command: String,
    pub config_hash: String,
    pub seed: u64,
    pub overrides: Vec<String>,
    pub inputs: Vec<FileDigest>,
    pub outputs: Vec<FileDigest>,
    pub wall_time_s: f64,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Ok(Sha256::digest(&bytes).iter().map(|b| format!("{b:02x}")).collect())
}

fn digests(paths: &[PathBuf]) -> Result<Vec<FileDigest>> {
    paths
        .iter()
        .map(|p| {
            Ok(FileDigest {
                path: p.clone(),
                sha256: sha256_file(p)?,
            })
        })
        .collect()
}

impl ManifestEntry {
    pub fn new(
        command: &str,
        config_hash: &str,
        seed: u64,
        overrides: Vec<String>,
        inputs: &[PathBuf],
        outputs: &[PathBuf],
        wall_time_s: f64,
    ) -> Result<Self> {
        Ok(ManifestEntry {
            command: command.to_string(),
            config_hash: config_hash.to_string(),
            seed,
            overrides,
            inputs: digests(inputs)?,
            outputs: digests(outputs)?,
            wall_time_s,
        })
    }

    pub fn append(&self, path: &Path) -> Result<()> {
        let mut line = serde_json::to_string(self).map_err(|e| Error::json(path.display().to_string(), e))?;
        line.push('\n');
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| Error::io(path, e))?;
        f.write_all(line.as_bytes()).map_err(|e| Error::io(path, e))
    }
}
