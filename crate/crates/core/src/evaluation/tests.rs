use super::*;
use crate::data::{normalize, stratified_split, synth_toy_cohort, Cohort, SplitSpec, SubgroupKey, ToyPreset};
use crate::downstream::{train_classifier, ClassifierTrainConfig};
use crate::error::{Error, Result};
use crate::numerics::{ConfidenceInterval, RngStream};

struct Toy {
    train: Cohort,
    holdout: Cohort,
    val: Cohort,
}

fn toy(n: usize, seed: u64) -> Toy {
    let preset = ToyPreset {
        n,
        ..ToyPreset::icu_toy_v1()
    };
    let raw = synth_toy_cohort(&preset, seed).unwrap();
    let (train, holdout, val) = stratified_split(&raw, &SplitSpec::default()).unwrap();
    let train = normalize(&train, None).unwrap();
    let stats = train.meta.normalization.clone().unwrap();
    Toy {
        holdout: normalize(&holdout, Some(&stats)).unwrap(),
        val: normalize(&val, Some(&stats)).unwrap(),
        train,
    }
}

impl Toy {
    fn splits(&self) -> Splits<'_> {
        Splits {
            train: &self.train,
            holdout: &self.holdout,
            holdout_val: &self.val,
        }
    }
}

fn tiny_protocol() -> EvalProtocol {
    EvalProtocol {
        classifier: ClassifierTrainConfig {
            hidden: 4,
            max_epochs: 3,
            ..ClassifierTrainConfig::default()
        },
        ..EvalProtocol::default()
    }
}

struct FailingSource;

impl SyntheticSource for FailingSource {
    fn name(&self) -> String {
        "failing".into()
    }
    fn synthesize(&self, _template: &Cohort, _rng: &RngStream) -> Result<Cohort> {
        Err(Error::numeric("sample_latent step 3", "non-finite latent"))
    }
}

fn run(model: usize, set: Option<usize>, auroc: Option<f64>) -> RunRecord {
    RunRecord {
        synth_set: set,
        model,
        auroc,
        error: auroc.is_none().then(|| "failed".to_string()),
    }
}

#[test]
fn identity_source_gives_exact_zero_gaps() {
    let t = toy(600, 1);
    let (report, models) = utility_eval(&IdentitySource, t.splits(), &tiny_protocol(), &RngStream::new(2)).unwrap();
    assert_eq!(report.tstr_train.len(), 25);
    assert_eq!(report.trts_evaluate.len(), 25);
    assert_eq!(report.trtr_train.len(), 5);
    assert_eq!(report.delta_tstr.unwrap().mean, 0.0);
    assert_eq!(report.delta_trts.unwrap().mean, 0.0);
    assert_eq!(report.delta_tstr.unwrap().half_width(), 0.0);
    assert_eq!(models.iter().filter(|m| m.is_some()).count(), 5);
    report.check_consistency().unwrap();
}

#[test]
fn gap_pairs_by_model_seed() {
    let real = vec![run(0, None, Some(0.8)), run(1, None, Some(0.7))];
    let synth = vec![
        run(0, Some(0), Some(0.75)),
        run(1, Some(0), Some(0.6)),
        run(0, Some(1), Some(0.85)),
        run(1, Some(1), None),
    ];
    let d = paired_differences(&real, &synth);
    assert_eq!(d.len(), 3);
    assert!((d[0] - 0.05).abs() < 1e-15 && (d[1] - 0.1).abs() < 1e-15 && (d[2] + 0.05).abs() < 1e-15);
    let g = gap(&real, &synth).unwrap();
    assert!((g.mean - 0.1 / 3.0).abs() < 1e-15);
    assert_eq!(g.n_runs, 3);

    // Negative mean gaps are reported as absolute values.
    let flipped: Vec<RunRecord> = synth.iter().map(|r| run(r.model, r.synth_set, r.auroc.map(|a| a + 0.2))).collect();
    let g = gap(&real, &flipped).unwrap();
    assert!(g.mean > 0.0 && g.lo <= g.mean && g.mean <= g.hi);
    assert!(gap(&real, &[run(0, Some(0), None)]).is_none());
}

#[test]
fn failing_source_is_recorded_not_fatal() {
    let t = toy(400, 3);
    let p = EvalProtocol {
        n_synth: 2,
        n_models: 2,
        ..tiny_protocol()
    };
    let (report, _) = utility_eval(&FailingSource, t.splits(), &p, &RngStream::new(4)).unwrap();
    assert_eq!(report.synthetic_failures.len(), 2);
    assert!(report.tstr_train.iter().all(|r| r.auroc.is_none() && r.error.as_ref().unwrap().contains("numeric")));
    assert!(report.trtr_train.iter().all(|r| r.auroc.is_some()));
    assert_eq!(report.delta_tstr, None);
    report.check_consistency().unwrap();
}

#[test]
fn identity_subgroups_have_zero_synthetic_error() {
    let t = toy(1200, 5);
    let p = EvalProtocol {
        n_split_seeds: 2,
        ..tiny_protocol()
    };
    let (clf, _) = train_classifier(&t.holdout, &t.val, &p.classifier, &RngStream::new(6)).unwrap();
    let report = subgroup_eval(&[clf], &t.train, &IdentitySource, &p, &RngStream::new(7)).unwrap();
    assert_eq!(report.entries.len(), SubgroupKey::COUNT);
    assert_eq!(report.wins + report.losses + report.ties + report.skipped, 32);
    for e in &report.entries {
        assert!(e.runs.iter().all(|r| r.eps_synth == 0.0));
        if !e.runs.is_empty() {
            assert_eq!(e.n_synth, e.n_large);
        }
        if e.verdict != Verdict::Skipped {
            assert_eq!(e.eps_synth.unwrap().mean, 0.0);
        }
    }
    report.check_consistency().unwrap();
    assert!(report.skipped < 32);
}

#[test]
fn toy_oracle_respects_template() {
    let t = toy(300, 8);
    let source = ToyOracleSource::new(ToyPreset::icu_toy_v1());
    let s = source.synthesize(&t.train, &RngStream::new(9)).unwrap();
    assert_eq!(s.conditions(), t.train.conditions());
    assert_eq!(s.meta, t.train.meta);
    let again = source.synthesize(&t.train, &RngStream::new(9)).unwrap();
    assert_eq!(s, again);
    let mean0 = |c: &Cohort| c.records.iter().map(|r| r.values[[0, 0]]).sum::<f64>() / c.len() as f64;
    assert!(mean0(&s).abs() < 0.3, "{}", mean0(&s));
}

#[test]
fn grid_has_nine_points_including_zero() {
    let g = default_grid();
    assert_eq!(g.len(), 9);
    assert!(g[0].is_zero());
    for (i, a) in g.iter().enumerate() {
        for b in &g[i + 1..] {
            assert_ne!(a, b);
        }
    }
    let base = GeneratorConfig::default();
    for w in &g {
        assert_eq!(base.with_weights(*w).weights(), *w);
    }
}

fn entry(index: usize, trts: Option<f64>, tstr: f64) -> SweepEntry {
    let ci = |m: f64| ConfidenceInterval {
        mean: m,
        lo: m,
        hi: m,
        n_runs: 1,
    };
    let report = trts.map(|v| UtilityReport {
        task: "mortality".into(),
        source: "x".into(),
        seed: 0,
        protocol: EvalProtocol::default(),
        classifier_hash: String::new(),
        synthetic_failures: vec![],
        trtr_train: vec![],
        tstr_train: vec![],
        trtr_evaluate: vec![],
        trts_evaluate: vec![],
        delta_tstr: Some(ci(tstr)),
        delta_trts: Some(ci(v)),
    });
    SweepEntry {
        index,
        rank: None,
        weights: default_grid()[index],
        error: report.is_none().then(|| "failed".into()),
        report,
    }
}

#[test]
fn ranking_orders_by_trts_then_tstr() {
    let entries = vec![
        entry(0, Some(0.05), 0.01),
        entry(1, None, 0.0),
        entry(2, Some(0.02), 0.03),
        entry(3, Some(0.02), 0.01),
        entry(4, Some(0.10), 0.00),
    ];
    let ranked = rank_entries(entries);
    assert_eq!(ranked.iter().map(|e| e.index).collect::<Vec<_>>(), vec![3, 2, 0, 4, 1]);
    assert_eq!(ranked.iter().map(|e| e.rank).collect::<Vec<_>>(), vec![Some(1), Some(2), Some(3), Some(4), None]);
    assert_eq!(rank_entries(ranked.clone()), ranked);
}

#[test]
fn reports_round_trip_and_detect_tampering() {
    let t = toy(400, 10);
    let p = EvalProtocol {
        n_synth: 2,
        n_models: 2,
        ..tiny_protocol()
    };
    let (u, _) = utility_eval(&IdentitySource, t.splits(), &p, &RngStream::new(11)).unwrap();
    let report = EvalReport::new("abc".into(), 11, p.classifier_hash(), ReportBody::Utility(u));
    assert!(!report.references.is_empty());
    let json = serde_json::to_string(&report).unwrap();
    let back: EvalReport = serde_json::from_str(&json).unwrap();
    assert_eq!(back, report);
    back.validate().unwrap();

    let mut tampered = report.clone();
    if let ReportBody::Utility(u) = &mut tampered.body {
        u.trtr_train[0].auroc = Some(0.123);
    }
    assert!(tampered.check_consistency().is_err());

    let text = render_reports(&[("identity".into(), report.clone())]).unwrap();
    assert!(text.contains("Δ_TRTS"));
    assert!(text.contains("0.0000 ± 0.0000"));
    let csv = utility_csv(&[("identity".into(), report.clone())]);
    assert_eq!(csv.lines().count(), 2);

    let mut other = report.clone();
    other.classifier_hash = "different".into();
    let err = render_reports(&[("a".into(), report), ("b".into(), other)]).unwrap_err();
    assert!(matches!(err, Error::Config(_)));
}

#[test]
fn zeroed_feature_is_detected_by_fidelity() {
    let t = toy(800, 12);
    let mut zeroed = t.train.clone();
    let stats = t.train.meta.normalization.clone().unwrap();
    let zero_in_normalized_units = -stats.mean[0] / stats.sd[0];
    for r in &mut zeroed.records {
        r.values.column_mut(0).fill(zero_in_normalized_units);
    }
    let p = EvalProtocol {
        n_fidelity_runs: 2,
        classifier: ClassifierTrainConfig {
            hidden: 8,
            max_epochs: 15,
            ..ClassifierTrainConfig::default()
        },
        ..EvalProtocol::default()
    };
    let f = fidelity_eval(&t.train, &zeroed, "zeroed", &p, &RngStream::new(13)).unwrap();
    assert_eq!(f.runs.len(), 2);
    assert!(f.disc_auc.mean > 0.9, "{}", f.disc_auc.mean);
    f.check_consistency().unwrap();
}

#[test]
fn mismatched_splits_are_rejected() {
    let t = toy(300, 14);
    let raw_holdout = crate::data::denormalize(&t.holdout).unwrap();
    let splits = Splits {
        train: &t.train,
        holdout: &raw_holdout,
        holdout_val: &t.val,
    };
    assert!(utility_eval(&IdentitySource, splits, &tiny_protocol(), &RngStream::new(15)).is_err());
}
