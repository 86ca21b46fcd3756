use ndarray::Array2;

use super::*;
use crate::autodiff::flatten_grads;
use crate::data::{forward_fill, AgeBracket, Cohort, CohortMeta, Condition, Ethnicity, PatientRecord, Sex};
use crate::numerics::{finite_diff_grad, max_relative_error, RngStream};

fn record(id: u64, values: Array2<f64>, mask: Array2<bool>, outcome: bool) -> PatientRecord {
    PatientRecord {
        id,
        values,
        mask,
        condition: Condition {
            age: AgeBracket::Over70,
            sex: Sex::F,
            ethnicity: Ethnicity::Asian,
            outcome,
        },
    }
}

fn random_records(n: usize, t: usize, f: usize, rng: &mut RngStream) -> Vec<PatientRecord> {
    observed_records(n, t, f, 0.8, rng)
}

fn observed_records(n: usize, t: usize, f: usize, p_obs: f64, rng: &mut RngStream) -> Vec<PatientRecord> {
    (0..n)
        .map(|i| {
            let outcome = rng.bernoulli(0.5);
            let raw = Array2::from_shape_fn((t, f), |_| {
                let v = rng.normal();
                rng.bernoulli(p_obs).then_some(v)
            });
            let (values, mask) = forward_fill(&raw, &vec![0.0; f]);
            record(i as u64, values, mask, outcome)
        })
        .collect()
}

/// Label decided by the sign of the last value of feature 0, shifted away
/// from zero so the classes are separated by a margin.
fn separable(n: usize, rng: &mut RngStream) -> Vec<PatientRecord> {
    (0..n)
        .map(|i| {
            let y = rng.bernoulli(0.5);
            let mut v = rng.normal_matrix(4, 2) * 0.3;
            v[[3, 0]] += if y { 1.5 } else { -1.5 };
            record(i as u64, v, Array2::from_elem((4, 2), true), y)
        })
        .collect()
}

fn cohort(records: Vec<PatientRecord>) -> Cohort {
    let (t, f) = records[0].values.dim();
    let names = (0..f).map(|j| format!("x{j}")).collect();
    Cohort::new(CohortMeta::new("mortality", names, t, vec![0.0; f]), records).unwrap()
}

fn arch(t: usize, f: usize, h: usize) -> ClassifierArch {
    ClassifierArch { t, f, hidden: h }
}

#[test]
fn zero_weights_give_one_half() {
    let mut rng = RngStream::new(1);
    let mut clf = GruClassifierParams::new(arch(3, 2, 4), &mut rng).unwrap();
    clf.params.map_inplace(|x| *x = 0.0);
    for r in random_records(10, 3, 2, &mut rng) {
        assert_eq!(classifier_forward(&r, &clf).unwrap(), 0.5);
    }
}

#[test]
fn forward_is_deterministic_bounded_and_shape_checked() {
    let mut rng = RngStream::new(2);
    let clf = GruClassifierParams::new(arch(3, 2, 4), &mut rng).unwrap();
    let mut recs = random_records(20, 3, 2, &mut rng);
    for r in &recs {
        let p = classifier_forward(r, &clf).unwrap();
        assert!(p > 0.0 && p < 1.0);
        assert_eq!(p, classifier_forward(r, &clf).unwrap());
    }
    recs[0].values = rng.normal_matrix(4, 2);
    assert!(classifier_forward(&recs[0], &clf).is_err());
}

#[test]
fn batched_and_single_predictions_agree() {
    let mut rng = RngStream::new(3);
    let clf = GruClassifierParams::new(arch(3, 2, 4), &mut rng).unwrap();
    let recs = random_records(7, 3, 2, &mut rng);
    let refs: Vec<&PatientRecord> = recs.iter().collect();
    let batch = clf.predict_proba(&refs).unwrap();
    for (r, p) in recs.iter().zip(batch) {
        assert!((classifier_forward(r, &clf).unwrap() - p).abs() < 1e-14);
    }
}

#[test]
fn gradients_match_finite_differences() {
    for seed in 0..20u64 {
        let mut rng = RngStream::new(300 + seed);
        let t = 1 + rng.below(3);
        let f = 1 + rng.below(2);
        let h = 1 + rng.below(4);
        let clf = GruClassifierParams::new(arch(t, f, h), &mut rng).unwrap();
        let recs = random_records(5, t, f, &mut rng);
        let refs: Vec<&PatientRecord> = recs.iter().collect();
        let labels: Vec<bool> = recs.iter().map(|r| r.condition.outcome).collect();
        let (_, grads) = classifier_loss_and_grads(&clf, &refs, &labels).unwrap();
        let mut probe = clf.clone();
        let numeric = finite_diff_grad(
            |x| {
                probe.params.set_flat(x).unwrap();
                classifier_loss(&probe, &refs, &labels).unwrap()
            },
            &clf.params.flatten(),
            1e-5,
        )
        .unwrap();
        let err = max_relative_error(&flatten_grads(&grads), &numeric, 1e-5);
        assert!(err < 1e-4, "seed {seed}: {err}");
    }
}

#[test]
fn separable_labels_are_learned() {
    let mut rng = RngStream::new(4);
    let train = cohort(separable(400, &mut rng));
    let val = cohort(separable(100, &mut rng));
    let cfg = ClassifierTrainConfig {
        hidden: 8,
        ..ClassifierTrainConfig::default()
    };
    let (clf, log) = train_classifier(&train, &val, &cfg, &RngStream::new(5)).unwrap();
    assert!(log.best_val_auroc >= 0.95, "{}", log.best_val_auroc);
    assert_eq!(evaluate_classifier(&clf, &val).unwrap(), log.best_val_auroc);

    let best = log.epochs.iter().map(|e| e.val_auroc).fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(best, log.best_val_auroc);
    let earliest = log.epochs.iter().position(|e| e.val_auroc == best).unwrap();
    assert_eq!(earliest, log.best_epoch);
}

#[test]
fn training_is_deterministic() {
    let mut rng = RngStream::new(6);
    let train = cohort(random_records(80, 3, 2, &mut rng));
    let val = cohort(random_records(40, 3, 2, &mut rng));
    let cfg = ClassifierTrainConfig {
        hidden: 4,
        max_epochs: 3,
        ..ClassifierTrainConfig::default()
    };
    let a = train_classifier(&train, &val, &cfg, &RngStream::new(7)).unwrap();
    let b = train_classifier(&train, &val, &cfg, &RngStream::new(7)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn single_class_validation_is_undefined() {
    let mut rng = RngStream::new(8);
    let train = cohort(random_records(20, 3, 2, &mut rng));
    let mut recs = random_records(10, 3, 2, &mut rng);
    recs.iter_mut().for_each(|r| r.condition.outcome = true);
    let val = cohort(recs);
    let err = train_classifier(&train, &val, &ClassifierTrainConfig::default(), &rng).unwrap_err();
    assert!(matches!(err, crate::Error::UndefinedMetric(_)));
    let clf = GruClassifierParams::new(arch(3, 2, 4), &mut rng).unwrap();
    assert!(matches!(evaluate_classifier(&clf, &val), Err(crate::Error::UndefinedMetric(_))));
}

#[test]
fn random_model_on_random_labels_is_near_chance() {
    let mut rng = RngStream::new(9);
    let clf = GruClassifierParams::new(arch(4, 3, 8), &mut rng).unwrap();
    let data = cohort(random_records(2000, 4, 3, &mut rng));
    let auc = evaluate_classifier(&clf, &data).unwrap();
    assert!((0.45..=0.55).contains(&auc), "{auc}");
    assert_eq!(auc, evaluate_classifier(&clf, &data).unwrap());
}

#[test]
fn shifted_synthetic_data_is_detected() {
    let mut rng = RngStream::new(10);
    let real = cohort(observed_records(300, 4, 2, 1.0, &mut rng));
    let mut shifted = observed_records(300, 4, 2, 1.0, &mut rng);
    for r in &mut shifted {
        r.values.column_mut(1).mapv_inplace(|v| v + 5.0);
    }
    let synth = cohort(shifted);
    let cfg = ClassifierTrainConfig {
        hidden: 8,
        max_epochs: 20,
        ..ClassifierTrainConfig::default()
    };
    let (_, run) = train_discriminator(&real, &synth, &cfg, &RngStream::new(11)).unwrap();
    assert!(run.disc_auc > 0.95, "{}", run.disc_auc);
    assert_eq!(run.n_test, 300);
    assert_eq!(run.n_fit + run.n_val + run.n_test, 600);
}

#[test]
fn discriminator_rejects_tiny_or_mismatched_inputs() {
    let mut rng = RngStream::new(12);
    let a = cohort(random_records(3, 3, 2, &mut rng));
    let b = cohort(random_records(10, 3, 2, &mut rng));
    let c = cohort(random_records(10, 2, 2, &mut rng));
    let cfg = ClassifierTrainConfig::default();
    assert!(train_discriminator(&a, &b, &cfg, &rng).is_err());
    assert!(train_discriminator(&b, &c, &cfg, &rng).is_err());
}

#[test]
fn checkpoint_round_trip() {
    let mut rng = RngStream::new(13);
    let clf = GruClassifierParams::new(arch(3, 2, 4), &mut rng).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("clf.json");
    crate::checkpoint::save(&path, CHECKPOINT_KIND, &clf).unwrap();
    let back: GruClassifierParams = crate::checkpoint::load(&path, CHECKPOINT_KIND).unwrap();
    assert_eq!(back, clf);
    back.validate().unwrap();
}
