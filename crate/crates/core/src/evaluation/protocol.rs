use serde::{Deserialize, Serialize};

use crate::checkpoint::config_hash;
use crate::data::Cohort;
use crate::downstream::ClassifierTrainConfig;
use crate::error::{Error, Result};

/// Repetition counts for every evaluation workflow plus the single
/// downstream classifier configuration shared by all of them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct EvalProtocol {
    pub n_synth: usize,
    pub n_models: usize,
    pub n_split_seeds: usize,
    pub n_fidelity_runs: usize,
    pub classifier: ClassifierTrainConfig,
}

impl Default for EvalProtocol {
    fn default() -> Self {
        EvalProtocol {
            n_synth: 5,
            n_models: 5,
            n_split_seeds: 5,
            n_fidelity_runs: 5,
            classifier: ClassifierTrainConfig::default(),
        }
    }
}

impl EvalProtocol {
    pub fn validate(&self) -> Result<()> {
        if self.n_synth == 0 || self.n_models == 0 || self.n_split_seeds == 0 || self.n_fidelity_runs == 0 {
            return Err(Error::Config("evaluation repeat counts must be positive".into()));
        }
        Ok(())
    }

    /// Hash of the downstream classifier configuration. Reports with
    /// different values are not comparable.
    pub fn classifier_hash(&self) -> String {
        config_hash(&self.classifier)
    }
}

/// The three real partitions, all in the same (normalized) units.
#[derive(Clone, Copy, Debug)]
pub struct Splits<'a> {
    pub train: &'a Cohort,
    pub holdout: &'a Cohort,
    pub holdout_val: &'a Cohort,
}

impl Splits<'_> {
    pub fn validate(&self) -> Result<()> {
        let m = &self.train.meta;
        for (name, c) in [("holdout", self.holdout), ("holdout_val", self.holdout_val)] {
            if c.meta.normalization != m.normalization || (c.meta.t, c.meta.f) != (m.t, m.f) {
                return Err(Error::input(format!(
                    "{name} split is not in the same units or shape as the training split"
                )));
            }
        }
        if self.train.is_empty() || self.holdout.is_empty() || self.holdout_val.is_empty() {
            return Err(Error::input("every split must be non-empty"));
        }
        Ok(())
    }
}
