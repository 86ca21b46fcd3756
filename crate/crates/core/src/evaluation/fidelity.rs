use serde::{Deserialize, Serialize};

use super::protocol::EvalProtocol;
use crate::data::Cohort;
use crate::downstream::train_discriminator;
use crate::error::Result;
use crate::numerics::{mean_ci95, ConfidenceInterval, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityRun {
    pub run: usize,
    pub disc_auc: f64,
    pub best_epoch: usize,
    pub n_test: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FidelityReport {
    pub task: String,
    pub source: String,
    pub seed: u64,
    pub classifier_hash: String,
    pub runs: Vec<FidelityRun>,
    pub disc_auc: ConfidenceInterval,
}

/// Discriminative fidelity: repeated real-vs-synthetic discriminators.
/// 0.5 means indistinguishable.
pub fn fidelity_eval(
    real: &Cohort,
    synthetic: &Cohort,
    source: &str,
    protocol: &EvalProtocol,
    rng: &RngStream,
) -> Result<FidelityReport> {
    protocol.validate()?;
    let runs = (0..protocol.n_fidelity_runs)
        .map(|r| {
            let (_, run) = train_discriminator(real, synthetic, &protocol.classifier, &rng.child_indexed("discriminator", r))?;
            Ok(FidelityRun {
                run: r,
                disc_auc: run.disc_auc,
                best_epoch: run.log.best_epoch,
                n_test: run.n_test,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let aucs: Vec<f64> = runs.iter().map(|r| r.disc_auc).collect();
    Ok(FidelityReport {
        task: real.meta.task.clone(),
        source: source.to_string(),
        seed: rng.seed(),
        classifier_hash: protocol.classifier_hash(),
        disc_auc: mean_ci95(&aucs)?,
        runs,
    })
}

impl FidelityReport {
    pub fn check_consistency(&self) -> std::result::Result<(), String> {
        let aucs: Vec<f64> = self.runs.iter().map(|r| r.disc_auc).collect();
        match mean_ci95(&aucs) {
            Ok(ci) if (ci.mean - self.disc_auc.mean).abs() < 1e-12 => Ok(()),
            _ => Err("stored DiscAUC does not match its runs".into()),
        }
    }
}
