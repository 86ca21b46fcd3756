use serde::{Deserialize, Serialize};

use super::model::GruClassifierParams;
use super::train::{train_on_labels, ClassifierTrainConfig, ClassifierTrainLog};
use crate::data::{Cohort, PatientRecord};
use crate::error::{Error, Result};
use crate::numerics::{auroc, RngStream};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscriminatorRun {
    /// AUROC of p(synthetic) on the held-out halves of both sides.
    pub disc_auc: f64,
    pub n_fit: usize,
    pub n_val: usize,
    pub n_test: usize,
    pub log: ClassifierTrainLog,
}

struct SideSplit<'a> {
    fit: Vec<&'a PatientRecord>,
    val: Vec<&'a PatientRecord>,
    test: Vec<&'a PatientRecord>,
}

/// Half of each side is held out for testing; the other half is split 80/20
/// into fitting and checkpoint-selection sets.
fn split_side<'a>(cohort: &'a Cohort, rng: &mut RngStream) -> SideSplit<'a> {
    let mut order: Vec<usize> = (0..cohort.len()).collect();
    rng.shuffle(&mut order);
    let n_test = cohort.len() / 2;
    let rest = cohort.len() - n_test;
    let n_val = ((rest as f64 * 0.2).round() as usize).clamp(1, rest - 1);
    let pick = |ix: &[usize]| ix.iter().map(|&i| &cohort.records[i]).collect::<Vec<_>>();
    SideSplit {
        test: pick(&order[..n_test]),
        val: pick(&order[n_test..n_test + n_val]),
        fit: pick(&order[n_test + n_val..]),
    }
}

fn labelled<'a>(real: &[&'a PatientRecord], synth: &[&'a PatientRecord]) -> (Vec<&'a PatientRecord>, Vec<bool>) {
    let records = real.iter().chain(synth).copied().collect();
    let labels = std::iter::repeat(false)
        .take(real.len())
        .chain(std::iter::repeat(true).take(synth.len()))
        .collect();
    (records, labels)
}

/// Train the fixed classifier to tell real (0) from synthetic (1) records
/// and score it on held-out data. Both cohorts must be in the same units.
pub fn train_discriminator(
    real: &Cohort,
    synthetic: &Cohort,
    cfg: &ClassifierTrainConfig,
    rng: &RngStream,
) -> Result<(GruClassifierParams, DiscriminatorRun)> {
    if real.len() < 4 || synthetic.len() < 4 {
        return Err(Error::input("the discriminator needs at least 4 records per side"));
    }
    if (real.meta.t, real.meta.f) != (synthetic.meta.t, synthetic.meta.f) {
        return Err(Error::input("real and synthetic cohorts have different shapes"));
    }
    let r = split_side(real, &mut rng.child("split_real"));
    let s = split_side(synthetic, &mut rng.child("split_synthetic"));
    let (fit_x, fit_y) = labelled(&r.fit, &s.fit);
    let (val_x, val_y) = labelled(&r.val, &s.val);
    let (test_x, test_y) = labelled(&r.test, &s.test);
    let (params, log) = train_on_labels((&fit_x, &fit_y), (&val_x, &val_y), cfg, &rng.child("train"))?;
    let disc_auc = auroc(&params.predict_proba(&test_x)?, &test_y)?;
    let run = DiscriminatorRun {
        disc_auc,
        n_fit: fit_x.len(),
        n_val: val_x.len(),
        n_test: test_x.len(),
        log,
    };
    Ok((params, run))
}
