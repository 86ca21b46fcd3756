use super::cohort::{Cohort, NormStats};
use crate::error::{Error, Result};

/// Mean and population sd of observed cells per feature.
pub fn compute_norm_stats(cohort: &Cohort) -> Result<NormStats> {
    if cohort.is_normalized() {
        return Err(Error::input("cohort is already normalized"));
    }
    let f = cohort.meta.f;
    let mut mean = vec![0.0; f];
    let mut sd = vec![0.0; f];
    for j in 0..f {
        let observed: Vec<f64> = cohort
            .records
            .iter()
            .flat_map(|r| {
                r.values
                    .column(j)
                    .iter()
                    .zip(r.mask.column(j))
                    .filter(|(_, m)| **m)
                    .map(|(v, _)| *v)
                    .collect::<Vec<_>>()
            })
            .collect();
        let name = &cohort.meta.feature_names[j];
        if observed.is_empty() {
            return Err(Error::input(format!("feature {name:?} has no observed values")));
        }
        let m = observed.iter().sum::<f64>() / observed.len() as f64;
        let var = observed.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / observed.len() as f64;
        if !(var.sqrt() > 1e-12) {
            return Err(Error::input(format!("feature {name:?} has zero standard deviation")));
        }
        mean[j] = m;
        sd[j] = var.sqrt();
    }
    Ok(NormStats { mean, sd })
}

/// Z-score every value with `stats`, or with statistics computed from this
/// cohort when `stats` is `None` (only appropriate for a training split).
pub fn normalize(cohort: &Cohort, stats: Option<&NormStats>) -> Result<Cohort> {
    if cohort.is_normalized() {
        return Err(Error::input("cohort is already normalized"));
    }
    let stats = match stats {
        Some(s) => {
            if s.mean.len() != cohort.meta.f || s.sd.len() != cohort.meta.f {
                return Err(Error::input("normalization stats do not match feature count"));
            }
            if let Some(j) = s.sd.iter().position(|v| !(*v > 0.0)) {
                return Err(Error::input(format!(
                    "feature {:?} has zero standard deviation",
                    cohort.meta.feature_names[j]
                )));
            }
            s.clone()
        }
        None => compute_norm_stats(cohort)?,
    };
    let mut out = cohort.clone();
    for r in &mut out.records {
        for ((_, j), v) in r.values.indexed_iter_mut() {
            *v = stats.apply(j, *v);
        }
    }
    out.meta.normalization = Some(stats);
    Ok(out)
}

pub fn denormalize(cohort: &Cohort) -> Result<Cohort> {
    let Some(stats) = cohort.meta.normalization.clone() else {
        return Err(Error::input("cohort is not normalized"));
    };
    let mut out = cohort.clone();
    for r in &mut out.records {
        for ((_, j), v) in r.values.indexed_iter_mut() {
            *v = stats.invert(j, *v);
        }
    }
    out.meta.normalization = None;
    Ok(out)
}
