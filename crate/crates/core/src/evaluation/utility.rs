use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::protocol::{EvalProtocol, Splits};
use super::source::SyntheticSource;
use crate::data::Cohort;
use crate::downstream::{evaluate_classifier, train_classifier, GruClassifierParams};
use crate::error::Result;
use crate::numerics::{mean_ci95, ConfidenceInterval, RngStream};

/// One downstream run. `synth_set` is `None` for real-data arms.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub synth_set: Option<usize>,
    pub model: usize,
    pub auroc: Option<f64>,
    pub error: Option<String>,
}

impl RunRecord {
    fn from_result(synth_set: Option<usize>, model: usize, r: Result<f64>) -> Self {
        match r {
            Ok(a) => RunRecord {
                synth_set,
                model,
                auroc: Some(a),
                error: None,
            },
            Err(e) => Self::failed(synth_set, model, format!("{}: {e}", e.kind())),
        }
    }

    fn failed(synth_set: Option<usize>, model: usize, error: String) -> Self {
        RunRecord {
            synth_set,
            model,
            auroc: None,
            error: Some(error),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSetFailure {
    pub set: usize,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilityReport {
    pub task: String,
    pub source: String,
    pub seed: u64,
    pub protocol: EvalProtocol,
    pub classifier_hash: String,
    pub synthetic_failures: Vec<SyntheticSetFailure>,
    pub trtr_train: Vec<RunRecord>,
    pub tstr_train: Vec<RunRecord>,
    pub trtr_evaluate: Vec<RunRecord>,
    pub trts_evaluate: Vec<RunRecord>,
    pub delta_tstr: Option<ConfidenceInterval>,
    pub delta_trts: Option<ConfidenceInterval>,
}

/// Real-minus-synthetic AUROC differences, pairing each synthetic-arm run
/// with the real-arm run of the same model seed.
pub fn paired_differences(real: &[RunRecord], synthetic: &[RunRecord]) -> Vec<f64> {
    synthetic
        .iter()
        .filter_map(|s| {
            let r = real.iter().find(|r| r.model == s.model)?;
            Some(r.auroc? - s.auroc?)
        })
        .collect()
}

/// `|mean(real) − mean(synthetic)|` with a t-interval over the paired
/// differences; `None` when no pair succeeded.
pub fn gap(real: &[RunRecord], synthetic: &[RunRecord]) -> Option<ConfidenceInterval> {
    let diffs = paired_differences(real, synthetic);
    mean_ci95(&diffs).ok().map(|ci| ci.oriented_abs())
}

pub fn synthesize_sets(
    source: &dyn SyntheticSource,
    template: &Cohort,
    n: usize,
    rng: &RngStream,
) -> Vec<Result<Cohort>> {
    (0..n)
        .map(|k| source.synthesize(template, &rng.child_indexed("synthetic_set", k)))
        .collect()
}

fn set_error(e: &crate::Error) -> String {
    format!("synthetic set unavailable ({}: {e})", e.kind())
}

fn model_error(e: &crate::Error) -> String {
    format!("model training failed ({}: {e})", e.kind())
}

/// Train-on-real vs train-on-synthetic, both tested on the real holdout.
/// Model seed `m` is shared between the arms.
pub fn training_utility(
    synthetic: &[Result<Cohort>],
    splits: Splits<'_>,
    protocol: &EvalProtocol,
    rng: &RngStream,
) -> (Vec<RunRecord>, Vec<RunRecord>, Option<ConfidenceInterval>) {
    let cfg = &protocol.classifier;
    let fit_and_test = |train: &Cohort, m: usize| -> Result<f64> {
        let (clf, _) = train_classifier(train, splits.holdout_val, cfg, &rng.child_indexed("model", m))?;
        evaluate_classifier(&clf, splits.holdout)
    };
    let trtr: Vec<RunRecord> = (0..protocol.n_models)
        .into_par_iter()
        .map(|m| RunRecord::from_result(None, m, fit_and_test(splits.train, m)))
        .collect();
    let jobs: Vec<(usize, usize)> = (0..synthetic.len())
        .flat_map(|k| (0..protocol.n_models).map(move |m| (k, m)))
        .collect();
    let tstr: Vec<RunRecord> = jobs
        .par_iter()
        .map(|&(k, m)| match &synthetic[k] {
            Ok(s) => RunRecord::from_result(Some(k), m, fit_and_test(s, m)),
            Err(e) => RunRecord::failed(Some(k), m, set_error(e)),
        })
        .collect();
    let delta = gap(&trtr, &tstr);
    (trtr, tstr, delta)
}

/// Models trained on the real holdout, scored on the real training split and
/// on every synthetic set. The trained models are returned for reuse.
pub fn evaluation_utility(
    synthetic: &[Result<Cohort>],
    splits: Splits<'_>,
    protocol: &EvalProtocol,
    rng: &RngStream,
) -> (Vec<RunRecord>, Vec<RunRecord>, Option<ConfidenceInterval>, Vec<Option<GruClassifierParams>>) {
    let cfg = &protocol.classifier;
    let models: Vec<Result<GruClassifierParams>> = (0..protocol.n_models)
        .into_par_iter()
        .map(|m| {
            train_classifier(splits.holdout, splits.holdout_val, cfg, &rng.child_indexed("model", m)).map(|(c, _)| c)
        })
        .collect();
    let trtr: Vec<RunRecord> = models
        .iter()
        .enumerate()
        .map(|(m, clf)| match clf {
            Ok(c) => RunRecord::from_result(None, m, evaluate_classifier(c, splits.train)),
            Err(e) => RunRecord::failed(None, m, model_error(e)),
        })
        .collect();
    let mut trts = Vec::with_capacity(synthetic.len() * models.len());
    for (k, s) in synthetic.iter().enumerate() {
        for (m, clf) in models.iter().enumerate() {
            trts.push(match (s, clf) {
                (Err(e), _) => RunRecord::failed(Some(k), m, set_error(e)),
                (Ok(_), Err(e)) => RunRecord::failed(Some(k), m, model_error(e)),
                (Ok(s), Ok(c)) => RunRecord::from_result(Some(k), m, evaluate_classifier(c, s)),
            });
        }
    }
    let delta = gap(&trtr, &trts);
    (trtr, trts, delta, models.into_iter().map(Result::ok).collect())
}

/// Both utility workflows over one shared collection of synthetic sets.
pub fn utility_eval(
    source: &dyn SyntheticSource,
    splits: Splits<'_>,
    protocol: &EvalProtocol,
    rng: &RngStream,
) -> Result<(UtilityReport, Vec<Option<GruClassifierParams>>)> {
    protocol.validate()?;
    splits.validate()?;
    let synthetic = synthesize_sets(source, splits.train, protocol.n_synth, &rng.child("synthesize"));
    let (trtr_train, tstr_train, delta_tstr) = training_utility(&synthetic, splits, protocol, &rng.child("training_utility"));
    let (trtr_evaluate, trts_evaluate, delta_trts, models) =
        evaluation_utility(&synthetic, splits, protocol, &rng.child("evaluation_utility"));
    let synthetic_failures = synthetic
        .iter()
        .enumerate()
        .filter_map(|(k, s)| {
            s.as_ref().err().map(|e| SyntheticSetFailure {
                set: k,
                error: e.to_string(),
            })
        })
        .collect();
    let report = UtilityReport {
        task: splits.train.meta.task.clone(),
        source: source.name(),
        seed: rng.seed(),
        protocol: protocol.clone(),
        classifier_hash: protocol.classifier_hash(),
        synthetic_failures,
        trtr_train,
        tstr_train,
        trtr_evaluate,
        trts_evaluate,
        delta_tstr,
        delta_trts,
    };
    Ok((report, models))
}

fn arm_mean(runs: &[RunRecord]) -> Option<f64> {
    let xs: Vec<f64> = runs.iter().filter_map(|r| r.auroc).collect();
    (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
}

impl UtilityReport {
    pub fn mean_auroc(&self) -> [Option<f64>; 4] {
        [
            arm_mean(&self.trtr_train),
            arm_mean(&self.tstr_train),
            arm_mean(&self.trtr_evaluate),
            arm_mean(&self.trts_evaluate),
        ]
    }

    /// Recompute both gaps from the stored runs and compare with the stored
    /// aggregates; also check run counts against the protocol.
    pub fn check_consistency(&self) -> std::result::Result<(), String> {
        let p = &self.protocol;
        let counts = [
            (self.trtr_train.len(), p.n_models),
            (self.tstr_train.len(), p.n_synth * p.n_models),
            (self.trtr_evaluate.len(), p.n_models),
            (self.trts_evaluate.len(), p.n_synth * p.n_models),
        ];
        if counts.iter().any(|(have, want)| have != want) {
            return Err(format!("run counts {counts:?} do not match the protocol"));
        }
        let close = |a: &Option<ConfidenceInterval>, b: &Option<ConfidenceInterval>| match (a, b) {
            (None, None) => true,
            (Some(a), Some(b)) => (a.mean - b.mean).abs() < 1e-12 && (a.lo - b.lo).abs() < 1e-12 && a.n_runs == b.n_runs,
            _ => false,
        };
        if !close(&gap(&self.trtr_train, &self.tstr_train), &self.delta_tstr) {
            return Err("stored delta_tstr does not match its runs".into());
        }
        if !close(&gap(&self.trtr_evaluate, &self.trts_evaluate), &self.delta_trts) {
            return Err("stored delta_trts does not match its runs".into());
        }
        for (delta, real, synth) in [
            (&self.delta_tstr, &self.trtr_train, &self.tstr_train),
            (&self.delta_trts, &self.trtr_evaluate, &self.trts_evaluate),
        ] {
            let complete = real.iter().chain(synth.iter()).all(|r| r.auroc.is_some());
            if let (Some(d), true, Some(a), Some(b)) = (delta, complete, arm_mean(real), arm_mean(synth)) {
                if ((a - b).abs() - d.mean).abs() > 1e-12 {
                    return Err("gap differs from the absolute difference of arm means".into());
                }
            }
        }
        Ok(())
    }
}
