use std::fs;
use std::path::{Path, PathBuf};

use crate::config::PathsConfig;
use crate::error::{Error, Result};

/// Fixed artifact locations below an output directory.
#[derive(Clone, Debug)]
pub struct Layout {
    out: PathBuf,
    checkpoints: PathBuf,
}

impl Layout {
    pub fn new(out: &Path, paths: &PathsConfig) -> Self {
        Layout {
            out: out.to_path_buf(),
            checkpoints: out.join(&paths.checkpoints),
        }
    }

    pub fn manifest(&self) -> PathBuf {
        self.out.join("manifest.ndjson")
    }

    pub fn split(&self, name: &str) -> PathBuf {
        self.out.join("splits").join(name)
    }

    pub fn split_indices(&self) -> PathBuf {
        self.out.join("splits").join("indices.json")
    }

    pub fn vae(&self) -> PathBuf {
        self.checkpoints.join("vae.json")
    }

    pub fn generator(&self) -> PathBuf {
        self.checkpoints.join("generator.json")
    }

    pub fn real_models(&self) -> PathBuf {
        self.checkpoints.join("real_models.json")
    }

    pub fn log(&self, phase: &str) -> PathBuf {
        self.out.join("logs").join(format!("{phase}_train.json"))
    }

    pub fn synthetic(&self) -> PathBuf {
        self.out.join("synthetic")
    }

    pub fn reports(&self) -> PathBuf {
        self.out.join("reports")
    }

    pub fn report(&self, kind: &str, source: &str) -> PathBuf {
        self.reports().join(format!("{kind}_{source}.json"))
    }

    pub fn csv(&self, name: &str) -> PathBuf {
        self.out.join("tables").join(format!("{name}.csv"))
    }

    pub fn summary(&self) -> PathBuf {
        self.out.join("tables").join("summary.txt")
    }

    /// Every `*.json` under the reports directory, sorted by name.
    pub fn report_files(&self) -> Result<Vec<PathBuf>> {
        let dir = self.reports();
        if !dir.exists() {
            return Ok(Vec::new());
        }
        let mut files: Vec<PathBuf> = fs::read_dir(&dir)
            .map_err(|e| Error::io(&dir, e))?
            .filter_map(|e| e.ok().map(|e| e.path()))
            .filter(|p| p.extension().is_some_and(|x| x == "json"))
            .collect();
        files.sort();
        Ok(files)
    }
}
