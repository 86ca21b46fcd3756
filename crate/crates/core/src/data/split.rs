use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::cohort::Cohort;
use super::condition::Condition;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Three-way split fractions with the seed for the in-stratum shuffle.
/// Strata are outcome × age × sex × ethnicity.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: f64,
    pub holdout: f64,
    pub holdout_val: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 0.45,
            holdout: 0.45,
            holdout_val: 0.10,
            seed: 0,
        }
    }
}

impl SplitSpec {
    pub fn fractions(&self) -> [f64; 3] {
        [self.train, self.holdout, self.holdout_val]
    }

    pub fn validate(&self) -> Result<()> {
        let f = self.fractions();
        if f.iter().any(|x| !(*x >= 0.0)) || (f.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must be non-negative and sum to 1, got {f:?}"
            )));
        }
        Ok(())
    }
}

/// Integer counts per part for each stratum.
///
/// Every stratum gets the floor of its quota plus at most one extra record
/// per part, so each count is within one of its exact quota. The extra
/// records go to the parts furthest behind their running global quota,
/// which keeps overall totals close to the requested fractions.
pub fn apportion(strata_sizes: &[usize], fractions: &[f64]) -> Vec<Vec<usize>> {
    let k = fractions.len();
    let mut global_quota = vec![0.0; k];
    let mut assigned = vec![0usize; k];
    let mut out = Vec::with_capacity(strata_sizes.len());
    for &n in strata_sizes {
        let quotas: Vec<f64> = fractions.iter().map(|f| f * n as f64).collect();
        let mut counts: Vec<usize> = quotas.iter().map(|q| q.floor() as usize).collect();
        let mut remaining = n - counts.iter().sum::<usize>().min(n);
        for (g, q) in global_quota.iter_mut().zip(&quotas) {
            *g += q;
        }
        let mut eligible: Vec<usize> = (0..k).filter(|&i| quotas[i] - counts[i] as f64 > 1e-12).collect();
        while remaining > 0 && !eligible.is_empty() {
            let deficit = |i: usize| global_quota[i] - (assigned[i] + counts[i]) as f64;
            let best = *eligible
                .iter()
                .max_by(|&&a, &&b| deficit(a).total_cmp(&deficit(b)).then(b.cmp(&a)))
                .expect("non-empty");
            counts[best] += 1;
            remaining -= 1;
            eligible.retain(|&i| i != best);
        }
        // Fractions that do not sum exactly to one can leave a record over.
        if remaining > 0 {
            counts[0] += remaining;
        }
        for (a, c) in assigned.iter_mut().zip(&counts) {
            *a += c;
        }
        out.push(counts);
    }
    out
}

/// Stratum label used for grouping and for the per-stratum shuffle stream.
fn stratum_of(c: &Condition) -> String {
    format!("{}|{}", c.key(), u8::from(c.outcome))
}

/// Record indices for train, holdout and holdout-validation parts.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitIndices {
    pub train: Vec<usize>,
    pub holdout: Vec<usize>,
    pub holdout_val: Vec<usize>,
}

pub fn stratified_split_indices(cohort: &Cohort, spec: &SplitSpec) -> Result<SplitIndices> {
    spec.validate()?;
    if cohort.is_empty() {
        return Err(Error::input("cannot split an empty cohort"));
    }
    // Canonical order by record id so membership ignores input order.
    let mut order: Vec<usize> = (0..cohort.len()).collect();
    order.sort_by_key(|&i| cohort.records[i].id);
    let mut strata: BTreeMap<String, Vec<usize>> = BTreeMap::new();
    for i in order {
        strata
            .entry(stratum_of(&cohort.records[i].condition))
            .or_default()
            .push(i);
    }
    let sizes: Vec<usize> = strata.values().map(Vec::len).collect();
    let counts = apportion(&sizes, &spec.fractions());
    let root = RngStream::new(spec.seed).child("stratified_split");
    let mut parts: [Vec<usize>; 3] = Default::default();
    for ((label, mut members), c) in strata.into_iter().zip(counts) {
        root.child(&label).shuffle(&mut members);
        let mut it = members.into_iter();
        for (p, n) in parts.iter_mut().zip(c) {
            p.extend(it.by_ref().take(n));
        }
    }
    for p in &mut parts {
        p.sort_by_key(|&i| cohort.records[i].id);
    }
    let [train, holdout, holdout_val] = parts;
    Ok(SplitIndices {
        train,
        holdout,
        holdout_val,
    })
}

/// Disjoint, exhaustive, stratified three-way split.
pub fn stratified_split(cohort: &Cohort, spec: &SplitSpec) -> Result<(Cohort, Cohort, Cohort)> {
    let idx = stratified_split_indices(cohort, spec)?;
    Ok((
        cohort.subset(&idx.train),
        cohort.subset(&idx.holdout),
        cohort.subset(&idx.holdout_val),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn apportion_within_one_of_quota() {
        let sizes = [1, 2, 3, 5, 7, 10, 31, 100];
        let fr = [0.45, 0.45, 0.10];
        for (n, c) in sizes.iter().zip(apportion(&sizes, &fr)) {
            assert_eq!(c.iter().sum::<usize>(), *n);
            for (f, k) in fr.iter().zip(&c) {
                assert!((*k as f64 - f * *n as f64).abs() <= 1.0);
            }
        }
    }

    #[test]
    fn apportion_five_into_eighty_twenty() {
        // 3 positives, 2 negatives.
        let c = apportion(&[3, 2], &[0.8, 0.2]);
        let large: usize = c.iter().map(|x| x[0]).sum();
        assert_eq!(large, 4);
    }

    #[test]
    fn spec_validation() {
        let bad = SplitSpec {
            train: 0.5,
            holdout: 0.5,
            holdout_val: 0.1,
            seed: 0,
        };
        assert!(bad.validate().is_err());
        assert!(SplitSpec::default().validate().is_ok());
    }
}
