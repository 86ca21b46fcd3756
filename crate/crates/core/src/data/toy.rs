//! Ground-truth toy cohort with known generative process.
//!
//! For each stay:
//!
//! 1. demographics are drawn from the configured marginals;
//! 2. every feature follows a stationary AR(1) around a subgroup mean
//!    `μ_fg = base_mean_f + age_offset + sex_offset + ethnicity_offset`:
//!    `v[t] = μ_fg + ρ (v[t-1] - μ_fg) + η_t`, `η_t ~ N(0, s_f²)`, with
//!    `v[0]` drawn from the stationary law `N(μ_fg, s_f² / (1 - ρ²))`;
//! 3. the outcome is Bernoulli with logit
//!    `intercept + Σ_f w_f (mean_t v_f - base_mean_f) / scale_f + b_age + b_sex + b_eth`;
//! 4. each cell is independently missing with the feature's rate, and the
//!    result is forward-filled with the population median of observed values.
//!
//! The default preset is `icu-toy-v1`.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::cohort::{Cohort, CohortMeta, PatientRecord};
use super::condition::{AgeBracket, Ethnicity, Sex, SubgroupKey};
use super::fill::{forward_fill, median};
use crate::error::{Error, Result};
use crate::numerics::RngStream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyFeature {
    pub name: String,
    pub base_mean: f64,
    pub innovation_sd: f64,
    /// Divisor applied to the time-mean deviation in the outcome logit.
    pub outcome_scale: f64,
    pub missing_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Marginals {
    pub age: [f64; 4],
    pub sex: [f64; 2],
    pub ethnicity: [f64; 4],
}

/// Additive feature offsets, one row of F values per category.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Offsets {
    pub age: Vec<Vec<f64>>,
    pub sex: Vec<Vec<f64>>,
    pub ethnicity: Vec<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutcomeModel {
    pub intercept: f64,
    pub feature_weights: Vec<f64>,
    pub age: [f64; 4],
    pub sex: [f64; 2],
    pub ethnicity: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ToyPreset {
    pub name: String,
    pub task: String,
    pub n: usize,
    #[serde(rename = "T")]
    pub t: usize,
    pub ar_coefficient: f64,
    pub features: Vec<ToyFeature>,
    pub marginals: Marginals,
    pub offsets: Offsets,
    pub outcome: OutcomeModel,
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

impl Default for ToyPreset {
    fn default() -> Self {
        Self::icu_toy_v1()
    }
}

impl ToyPreset {
    /// Four vitals over eight hours with a roughly 30% positive rate.
    pub fn icu_toy_v1() -> Self {
        let feature = |name: &str, base_mean, innovation_sd, outcome_scale, missing_rate| ToyFeature {
            name: name.into(),
            base_mean,
            innovation_sd,
            outcome_scale,
            missing_rate,
        };
        ToyPreset {
            name: "icu-toy-v1".into(),
            task: "mortality".into(),
            n: 4000,
            t: 8,
            ar_coefficient: 0.8,
            features: vec![
                feature("heart_rate", 85.0, 5.0, 8.0, 0.10),
                feature("resp_rate", 18.0, 1.5, 2.5, 0.15),
                feature("spo2", 96.0, 0.8, 1.5, 0.10),
                feature("mean_bp", 80.0, 5.0, 8.0, 0.20),
            ],
            marginals: Marginals {
                age: [0.15, 0.30, 0.35, 0.20],
                sex: [0.52, 0.48],
                ethnicity: [0.60, 0.18, 0.08, 0.14],
            },
            offsets: Offsets {
                age: vec![
                    vec![6.0, 1.0, 1.0, -4.0],
                    vec![2.0, 0.0, 0.5, -1.0],
                    vec![-1.0, 0.5, -0.5, 2.0],
                    vec![-4.0, 1.5, -1.5, 4.0],
                ],
                sex: vec![vec![-2.0, 0.0, 0.0, 2.0], vec![2.0, 0.0, 0.0, -2.0]],
                ethnicity: vec![
                    vec![0.0, 0.0, 0.0, 0.0],
                    vec![3.0, 0.5, -0.5, 3.0],
                    vec![-2.0, -0.5, 0.5, -2.0],
                    vec![1.0, 0.0, 0.0, 1.0],
                ],
            },
            outcome: OutcomeModel {
                intercept: -1.0,
                feature_weights: vec![1.0, 1.0, -1.0, -0.8],
                age: [-0.8, -0.3, 0.2, 0.7],
                sex: [0.1, -0.1],
                ethnicity: [0.0, 0.2, -0.2, 0.1],
            },
        }
    }

    pub fn num_features(&self) -> usize {
        self.features.len()
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.features.iter().map(|f| f.name.clone()).collect()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(format!("toy preset {:?}: {m}", self.name)));
        let f = self.features.len();
        if self.n == 0 {
            return bad("n must be positive".into());
        }
        if self.t == 0 || f == 0 {
            return bad("T and the feature list must be non-empty".into());
        }
        if !(self.ar_coefficient.abs() < 1.0) {
            return bad(format!("AR coefficient {} must be in (-1, 1)", self.ar_coefficient));
        }
        for feat in &self.features {
            if !(feat.innovation_sd >= 0.0) || !(feat.outcome_scale > 0.0) || !feat.base_mean.is_finite() {
                return bad(format!("feature {:?} has invalid scale parameters", feat.name));
            }
            if !(0.0..1.0).contains(&feat.missing_rate) {
                return bad(format!("feature {:?} missing rate must be in [0, 1)", feat.name));
            }
        }
        let marginals = [
            &self.marginals.age[..],
            &self.marginals.sex[..],
            &self.marginals.ethnicity[..],
        ];
        for m in marginals {
            if m.iter().any(|p| !(*p >= 0.0)) || !(m.iter().sum::<f64>() > 0.0) {
                return bad("marginals must be non-negative with positive mass".into());
            }
        }
        let rows_ok = |rows: &Vec<Vec<f64>>, n: usize| rows.len() == n && rows.iter().all(|r| r.len() == f);
        if !rows_ok(&self.offsets.age, 4) || !rows_ok(&self.offsets.sex, 2) || !rows_ok(&self.offsets.ethnicity, 4) {
            return bad("offsets must have one row of F values per category".into());
        }
        if self.outcome.feature_weights.len() != f {
            return bad("outcome.feature_weights must have F entries".into());
        }
        Ok(())
    }

    pub fn subgroup_mean(&self, key: SubgroupKey, feature: usize) -> f64 {
        self.features[feature].base_mean
            + self.offsets.age[key.age.index()][feature]
            + self.offsets.sex[key.sex.index()][feature]
            + self.offsets.ethnicity[key.ethnicity.index()][feature]
    }

    pub fn sample_key(&self, rng: &mut RngStream) -> SubgroupKey {
        SubgroupKey {
            age: AgeBracket::from_index(rng.categorical(&self.marginals.age)).expect("4 brackets"),
            sex: Sex::from_index(rng.categorical(&self.marginals.sex)).expect("2 sexes"),
            ethnicity: Ethnicity::from_index(rng.categorical(&self.marginals.ethnicity)).expect("4 groups"),
        }
    }

    /// Clean T×F AR(1) trajectories for one stay in subgroup `key`.
    pub fn sample_series(&self, key: SubgroupKey, rng: &mut RngStream) -> Array2<f64> {
        let rho = self.ar_coefficient;
        let mut v = Array2::zeros((self.t, self.num_features()));
        for (j, feat) in self.features.iter().enumerate() {
            let mu = self.subgroup_mean(key, j);
            let stationary_sd = feat.innovation_sd / (1.0 - rho * rho).sqrt();
            let mut prev = mu + stationary_sd * rng.normal();
            v[[0, j]] = prev;
            for t in 1..self.t {
                prev = mu + rho * (prev - mu) + feat.innovation_sd * rng.normal();
                v[[t, j]] = prev;
            }
        }
        v
    }

    pub fn outcome_logit(&self, key: SubgroupKey, series: &Array2<f64>) -> f64 {
        let mut logit = self.outcome.intercept
            + self.outcome.age[key.age.index()]
            + self.outcome.sex[key.sex.index()]
            + self.outcome.ethnicity[key.ethnicity.index()];
        for (j, feat) in self.features.iter().enumerate() {
            let time_mean = series.column(j).mean().expect("T > 0");
            logit += self.outcome.feature_weights[j] * (time_mean - feat.base_mean) / feat.outcome_scale;
        }
        logit
    }

    pub fn outcome_probability(&self, key: SubgroupKey, series: &Array2<f64>) -> f64 {
        sigmoid(self.outcome_logit(key, series))
    }

    /// `None` marks a missing cell.
    pub fn apply_missingness(&self, series: &Array2<f64>, rng: &mut RngStream) -> Array2<Option<f64>> {
        let mut raw = series.mapv(Some);
        for t in 0..self.t {
            for (j, feat) in self.features.iter().enumerate() {
                if rng.bernoulli(feat.missing_rate) {
                    raw[[t, j]] = None;
                }
            }
        }
        raw
    }

    /// One stay from subgroup `key`: raw values with missing markers and the
    /// sampled outcome.
    pub fn sample_stay(&self, key: SubgroupKey, rng: &mut RngStream) -> (Array2<Option<f64>>, bool) {
        let series = self.sample_series(key, rng);
        let outcome = rng.bernoulli(self.outcome_probability(key, &series));
        (self.apply_missingness(&series, rng), outcome)
    }
}

/// Generate the toy cohort (raw units, not normalized). Record `i` uses the
/// child stream `record/i`, so cohorts of different sizes share prefixes.
pub fn synth_toy_cohort(preset: &ToyPreset, seed: u64) -> Result<Cohort> {
    preset.validate()?;
    let root = RngStream::new(seed).child("toy_cohort");
    let mut stays = Vec::with_capacity(preset.n);
    for i in 0..preset.n {
        let mut rng = root.child_indexed("record", i);
        let key = preset.sample_key(&mut rng);
        let (raw, outcome) = preset.sample_stay(key, &mut rng);
        stays.push((key.with_outcome(outcome), raw));
    }
    let f = preset.num_features();
    let mut fill_values = Vec::with_capacity(f);
    for j in 0..f {
        let mut observed: Vec<f64> = stays
            .iter()
            .flat_map(|(_, raw)| raw.column(j).iter().flatten().copied().collect::<Vec<_>>())
            .collect();
        fill_values.push(median(&mut observed).unwrap_or(preset.features[j].base_mean));
    }
    let records = stays
        .into_iter()
        .enumerate()
        .map(|(i, (condition, raw))| {
            let (values, mask) = forward_fill(&raw, &fill_values);
            PatientRecord {
                id: i as u64,
                values,
                mask,
                condition,
            }
        })
        .collect();
    let meta = CohortMeta::new(preset.task.clone(), preset.feature_names(), preset.t, fill_values);
    Cohort::new(meta, records)
}
