use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::protocol::EvalProtocol;
use super::source::SyntheticSource;
use crate::data::{subgroup_80_20_split, subgroup_partition, Cohort, SubgroupKey};
use crate::downstream::{evaluate_classifier, GruClassifierParams};
use crate::error::{Error, Result};
use crate::numerics::{mean_ci95, ConfidenceInterval, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    SyntheticWins,
    TestWins,
    Tie,
    Skipped,
}

/// Errors of one (split seed, model) pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupRun {
    pub split_seed: usize,
    pub model: usize,
    pub auroc_large: f64,
    pub auroc_small: f64,
    pub auroc_synth: f64,
    pub eps_naive: f64,
    pub eps_synth: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupEntry {
    pub key: SubgroupKey,
    pub n_group: usize,
    pub n_large: usize,
    pub n_small: usize,
    pub n_synth: usize,
    pub runs: Vec<SubgroupRun>,
    /// Reasons for (split seed, model) pairs that produced no run.
    pub skipped_runs: Vec<String>,
    pub eps_naive: Option<ConfidenceInterval>,
    pub eps_synth: Option<ConfidenceInterval>,
    /// Fraction of paired runs with `eps_synth < eps_naive`.
    pub paired_win_rate: Option<f64>,
    pub verdict: Verdict,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SubgroupReport {
    pub task: String,
    pub source: String,
    pub seed: u64,
    pub classifier_hash: String,
    pub n_split_seeds: usize,
    pub n_models: usize,
    pub entries: Vec<SubgroupEntry>,
    pub mean_eps_naive: Option<f64>,
    pub mean_eps_synth: Option<f64>,
    pub wins: usize,
    pub losses: usize,
    pub ties: usize,
    pub skipped: usize,
    /// `wins / (32 − skipped)`.
    pub win_fraction: Option<f64>,
}

impl Verdict {
    pub fn label(self) -> &'static str {
        match self {
            Verdict::SyntheticWins => "synthetic_wins",
            Verdict::TestWins => "test_wins",
            Verdict::Tie => "tie",
            Verdict::Skipped => "skipped",
        }
    }
}

fn verdict(naive: &Option<ConfidenceInterval>, synth: &Option<ConfidenceInterval>) -> Verdict {
    match (naive, synth) {
        (Some(n), Some(s)) if s.mean < n.mean => Verdict::SyntheticWins,
        (Some(n), Some(s)) if s.mean > n.mean => Verdict::TestWins,
        (Some(_), Some(_)) => Verdict::Tie,
        _ => Verdict::Skipped,
    }
}

fn undefined_or(r: Result<f64>, reasons: &mut Vec<String>, what: &str) -> Result<Option<f64>> {
    match r {
        Ok(v) => Ok(Some(v)),
        Err(Error::UndefinedMetric(msg)) => {
            reasons.push(format!("{what}: {msg}"));
            Ok(None)
        }
        Err(e) => Err(e),
    }
}

fn evaluate_group(
    key: SubgroupKey,
    members: &[usize],
    models: &[&GruClassifierParams],
    r_train: &Cohort,
    source: &dyn SyntheticSource,
    protocol: &EvalProtocol,
    rng: &RngStream,
) -> Result<SubgroupEntry> {
    let mut entry = SubgroupEntry {
        key,
        n_group: members.len(),
        n_large: 0,
        n_small: 0,
        n_synth: 0,
        runs: Vec::new(),
        skipped_runs: Vec::new(),
        eps_naive: None,
        eps_synth: None,
        paired_win_rate: None,
        verdict: Verdict::Skipped,
    };
    if members.is_empty() {
        entry.skipped_runs.push("subgroup has no records".into());
        return Ok(entry);
    }
    let group_rng = rng.child("synthetic").child(&key.to_string());
    for s in 0..protocol.n_split_seeds {
        let seed = rng.child_indexed("split", s).derive_seed("subgroup_80_20");
        let split = subgroup_80_20_split(r_train, members, seed)?;
        entry.n_large = split.large.len();
        entry.n_small = split.small.len();
        if split.small.is_empty() {
            entry.skipped_runs.push(format!("split {s}: empty small slice"));
            continue;
        }
        let large = r_train.subset(&split.large);
        let small = r_train.subset(&split.small);
        let synth = source.synthesize(&large, &group_rng.child_indexed("split", s))?;
        entry.n_synth = synth.len();
        for (m, clf) in models.iter().enumerate() {
            let reasons = &mut entry.skipped_runs;
            let tag = |part: &str| format!("split {s} model {m} {part}");
            let a_large = undefined_or(evaluate_classifier(clf, &large), reasons, &tag("large"))?;
            let a_small = undefined_or(evaluate_classifier(clf, &small), reasons, &tag("small"))?;
            let a_synth = undefined_or(evaluate_classifier(clf, &synth), reasons, &tag("synthetic"))?;
            if let (Some(l), Some(sm), Some(sy)) = (a_large, a_small, a_synth) {
                entry.runs.push(SubgroupRun {
                    split_seed: s,
                    model: m,
                    auroc_large: l,
                    auroc_small: sm,
                    auroc_synth: sy,
                    eps_naive: (l - sm).abs(),
                    eps_synth: (l - sy).abs(),
                });
            }
        }
    }
    if !entry.runs.is_empty() {
        let naive: Vec<f64> = entry.runs.iter().map(|r| r.eps_naive).collect();
        let synth: Vec<f64> = entry.runs.iter().map(|r| r.eps_synth).collect();
        entry.eps_naive = mean_ci95(&naive).ok();
        entry.eps_synth = mean_ci95(&synth).ok();
        let wins = entry.runs.iter().filter(|r| r.eps_synth < r.eps_naive).count();
        entry.paired_win_rate = Some(wins as f64 / entry.runs.len() as f64);
    }
    entry.verdict = verdict(&entry.eps_naive, &entry.eps_synth);
    Ok(entry)
}

/// Subgroup-level error of a small real test slice versus a synthetic
/// cohort, both measured against the larger real slice of the same group.
///
/// `models` are the real-trained models (trained on the real holdout);
/// subgroups are taken from `r_train`.
pub fn subgroup_eval(
    models: &[GruClassifierParams],
    r_train: &Cohort,
    source: &dyn SyntheticSource,
    protocol: &EvalProtocol,
    rng: &RngStream,
) -> Result<SubgroupReport> {
    protocol.validate()?;
    if models.is_empty() {
        return Err(Error::input("subgroup evaluation needs at least one trained model"));
    }
    let model_refs: Vec<&GruClassifierParams> = models.iter().collect();
    let partition: Vec<(SubgroupKey, Vec<usize>)> = subgroup_partition(r_train).into_iter().collect();
    let entries: Vec<SubgroupEntry> = partition
        .par_iter()
        .map(|(key, members)| evaluate_group(*key, members, &model_refs, r_train, source, protocol, rng))
        .collect::<Result<_>>()?;
    Ok(summarize(
        entries,
        SubgroupReport {
            task: r_train.meta.task.clone(),
            source: source.name(),
            seed: rng.seed(),
            classifier_hash: protocol.classifier_hash(),
            n_split_seeds: protocol.n_split_seeds,
            n_models: models.len(),
            entries: Vec::new(),
            mean_eps_naive: None,
            mean_eps_synth: None,
            wins: 0,
            losses: 0,
            ties: 0,
            skipped: 0,
            win_fraction: None,
        },
    ))
}

fn summarize(entries: Vec<SubgroupEntry>, mut report: SubgroupReport) -> SubgroupReport {
    let count = |v: Verdict| entries.iter().filter(|e| e.verdict == v).count();
    report.wins = count(Verdict::SyntheticWins);
    report.losses = count(Verdict::TestWins);
    report.ties = count(Verdict::Tie);
    report.skipped = count(Verdict::Skipped);
    let evaluated = entries.len() - report.skipped;
    let mean_of = |f: fn(&SubgroupEntry) -> Option<f64>| {
        let xs: Vec<f64> = entries.iter().filter_map(f).collect();
        (!xs.is_empty()).then(|| xs.iter().sum::<f64>() / xs.len() as f64)
    };
    report.mean_eps_naive = mean_of(|e| e.eps_naive.map(|c| c.mean));
    report.mean_eps_synth = mean_of(|e| e.eps_synth.map(|c| c.mean));
    report.win_fraction = (evaluated > 0).then(|| report.wins as f64 / evaluated as f64);
    report.entries = entries;
    report
}

impl SubgroupReport {
    pub fn check_consistency(&self) -> std::result::Result<(), String> {
        if self.entries.len() != SubgroupKey::COUNT {
            return Err(format!("{} subgroup entries, expected {}", self.entries.len(), SubgroupKey::COUNT));
        }
        if self.wins + self.losses + self.ties + self.skipped != SubgroupKey::COUNT {
            return Err("verdict counts do not add up to 32".into());
        }
        for e in &self.entries {
            let naive: Vec<f64> = e.runs.iter().map(|r| r.eps_naive).collect();
            let recomputed = mean_ci95(&naive).ok();
            let same = match (recomputed, e.eps_naive) {
                (None, None) => true,
                (Some(a), Some(b)) => (a.mean - b.mean).abs() < 1e-12,
                _ => false,
            };
            if !same || verdict(&e.eps_naive, &e.eps_synth) != e.verdict {
                return Err(format!("subgroup {} aggregates do not match its runs", e.key));
            }
            if e.runs.iter().any(|r| (r.eps_synth - (r.auroc_large - r.auroc_synth).abs()).abs() > 1e-15) {
                return Err(format!("subgroup {} has an inconsistent synthetic error", e.key));
            }
        }
        Ok(())
    }
}
