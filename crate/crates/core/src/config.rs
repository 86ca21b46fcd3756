//! Run configuration: one JSON document plus `key.path=value` overrides.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::checkpoint::config_hash;
use crate::data::io::read_json;
use crate::data::{SplitSpec, ToyPreset};
use crate::error::{Error, Result};
use crate::evaluation::{default_grid, AlignmentWeights, EvalProtocol, GeneratorConfig};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Task {
    #[default]
    Mortality,
    LosBinary,
}

impl Task {
    pub fn label(self) -> &'static str {
        match self {
            Task::Mortality => "mortality",
            Task::LosBinary => "los_binary",
        }
    }
}

/// Where datasets and artifacts live. Paths are excluded from the config
/// hash, so relocating a run does not change its artifacts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PathsConfig {
    /// Dataset directory read by `split`.
    pub dataset: PathBuf,
    /// Checkpoint directory; relative paths resolve against `--out`.
    pub checkpoints: PathBuf,
}

impl Default for PathsConfig {
    fn default() -> Self {
        PathsConfig {
            dataset: PathBuf::from("data/toy"),
            checkpoints: PathBuf::from("checkpoints"),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub paths: PathsConfig,
    pub task: Task,
    pub toy: ToyPreset,
    pub split: SplitSpec,
    pub generator: GeneratorConfig,
    pub protocol: EvalProtocol,
    pub sweep_grid: Vec<AlignmentWeights>,
}

#[derive(Serialize)]
struct Hashed<'a> {
    task: Task,
    toy: &'a ToyPreset,
    split: &'a SplitSpec,
    generator: &'a GeneratorConfig,
    protocol: &'a EvalProtocol,
    sweep_grid: &'a [AlignmentWeights],
}

impl RunConfig {
    /// Defaults with the standard nine-point sweep grid.
    pub fn standard() -> Self {
        RunConfig {
            sweep_grid: default_grid(),
            ..RunConfig::default()
        }
    }

    /// Read a config file (or the defaults) and apply overrides in order.
    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let base = match path {
            Some(p) if !p.exists() => {
                return Err(Error::Config(format!("config file {} does not exist", p.display())))
            }
            Some(p) => {
                let v: Value = read_json(p).map_err(|e| Error::Config(e.to_string()))?;
                Self::from_value(v)?
            }
            None => Self::standard(),
        };
        base.with_overrides(overrides)
    }

    fn from_value(v: Value) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_value(v).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Apply `a.b.c=value` overrides. The value is parsed as JSON when it
    /// parses, otherwise taken as a string. Keys must already exist.
    pub fn with_overrides(&self, overrides: &[String]) -> Result<Self> {
        let mut v = serde_json::to_value(self).expect("config serializes");
        for o in overrides {
            let (key, raw) = o
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("override {o:?} is not of the form key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            let mut slot = &mut v;
            for part in key.split('.') {
                slot = match slot {
                    Value::Object(map) => map
                        .get_mut(part)
                        .ok_or_else(|| Error::Config(format!("unknown config key {key:?}")))?,
                    Value::Array(items) => part
                        .parse::<usize>()
                        .ok()
                        .and_then(|i| items.get_mut(i))
                        .ok_or_else(|| Error::Config(format!("bad index {part:?} in config key {key:?}")))?,
                    _ => return Err(Error::Config(format!("config key {key:?} goes below a scalar"))),
                };
            }
            *slot = value;
        }
        Self::from_value(v)
    }

    pub fn validate(&self) -> Result<()> {
        self.split.validate()?;
        self.protocol.validate()?;
        self.toy.validate().map_err(|e| Error::Config(e.to_string()))?;
        if self.toy.task != self.task.label() {
            return Err(Error::Config(format!(
                "toy preset task {:?} does not match the selected task {:?}",
                self.toy.task,
                self.task.label()
            )));
        }
        if self.sweep_grid.is_empty() {
            return Err(Error::Config("sweep_grid must not be empty".into()));
        }
        Ok(())
    }

    /// SHA-256 over everything except the paths.
    pub fn hash(&self) -> String {
        config_hash(&Hashed {
            task: self.task,
            toy: &self.toy,
            split: &self.split,
            generator: &self.generator,
            protocol: &self.protocol,
            sweep_grid: &self.sweep_grid,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_round_trip() {
        let c = RunConfig::standard();
        c.validate().unwrap();
        assert_eq!(c.sweep_grid.len(), 9);
        let text = serde_json::to_string(&c).unwrap();
        assert_eq!(RunConfig::from_value(serde_json::from_str(&text).unwrap()).unwrap(), c);
    }

    #[test]
    fn overrides_apply_and_unknown_keys_fail() {
        let c = RunConfig::standard()
            .with_overrides(&["generator.vae.epochs=3".into(), "task=los_binary".into(), "toy.task=los_binary".into()])
            .unwrap();
        assert_eq!(c.generator.vae.epochs, 3);
        assert_eq!(c.task, Task::LosBinary);
        assert!(RunConfig::standard().with_overrides(&["generator.vae.epoch=3".into()]).is_err());
        assert!(RunConfig::standard().with_overrides(&["generator.vae.epochs".into()]).is_err());
        assert!(RunConfig::standard().with_overrides(&["task=length_of_stay".into()]).is_err());
        let grid = RunConfig::standard().with_overrides(&["sweep_grid.8.ae_mmd=0.3".into()]).unwrap();
        assert_eq!(grid.sweep_grid[8].ae_mmd, 0.3);
    }

    #[test]
    fn unknown_fields_in_files_are_rejected() {
        let mut v = serde_json::to_value(RunConfig::standard()).unwrap();
        v["protocol"]["n_runs"] = Value::from(3);
        assert!(matches!(RunConfig::from_value(v), Err(Error::Config(_))));
    }

    #[test]
    fn hash_ignores_paths_only() {
        let a = RunConfig::standard();
        let mut b = a.clone();
        b.paths.dataset = PathBuf::from("/elsewhere");
        assert_eq!(a.hash(), b.hash());
        b.protocol.n_models = 4;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn mismatched_task_is_a_config_error() {
        let mut c = RunConfig::standard();
        c.task = Task::LosBinary;
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
