use latdiff::data::{normalize, stratified_split, synth_toy_cohort, Cohort, SplitSpec, ToyPreset};
use latdiff::downstream::ClassifierTrainConfig;
use latdiff::evaluation::{
    default_grid, fidelity_eval, render_reports, subgroup_eval, train_generator, utility_eval, weight_sweep,
    EvalProtocol, EvalReport, GeneratorConfig, ReportBody, Splits, SyntheticSource,
};
use latdiff::numerics::RngStream;

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

fn splits(t: &Toy) -> Splits<'_> {
    Splits {
        train: &t.train,
        holdout: &t.holdout,
        holdout_val: &t.val,
    }
}

fn tiny_generator() -> GeneratorConfig {
    let mut g = GeneratorConfig::default();
    g.vae.enc_hidden = 8;
    g.vae.dec_hidden = 8;
    g.vae.latent_dim = 2;
    g.vae.epochs = 2;
    g.diffusion.hidden = 8;
    g.diffusion.steps = 20;
    g.diffusion.epochs = 2;
    g
}

fn tiny_protocol() -> EvalProtocol {
    EvalProtocol {
        n_synth: 2,
        n_models: 2,
        n_split_seeds: 2,
        n_fidelity_runs: 2,
        classifier: ClassifierTrainConfig {
            hidden: 4,
            max_epochs: 2,
            ..ClassifierTrainConfig::default()
        },
    }
}

#[test]
fn generator_pipeline_reports_are_consistent_and_reproducible() {
    let t = toy(600, 1);
    let p = tiny_protocol();
    let bundle = train_generator(&t.train, &tiny_generator(), &RngStream::new(2)).unwrap();
    let (u, models) = utility_eval(&bundle, splits(&t), &p, &RngStream::new(3)).unwrap();
    assert_eq!(u.tstr_train.len(), 4);
    assert_eq!(u.trts_evaluate.len(), 4);
    assert!(u.synthetic_failures.is_empty());
    u.check_consistency().unwrap();
    let (again, _) = utility_eval(&bundle, splits(&t), &p, &RngStream::new(3)).unwrap();
    assert_eq!(serde_json::to_string(&u).unwrap(), serde_json::to_string(&again).unwrap());

    let models: Vec<_> = models.into_iter().flatten().collect();
    let sub = subgroup_eval(&models, &t.train, &bundle, &p, &RngStream::new(4)).unwrap();
    sub.check_consistency().unwrap();
    assert_eq!(sub.entries.len(), 32);

    let synth = bundle.synthesize(&t.train, &RngStream::new(5)).unwrap();
    assert_eq!(synth.conditions(), t.train.conditions());
    let fid = fidelity_eval(&t.train, &synth, &bundle.name(), &p, &RngStream::new(6)).unwrap();
    assert_eq!(fid.runs.len(), 2);

    let hash = p.classifier_hash();
    let reports = vec![
        ("utility".to_string(), EvalReport::new("cfg".into(), 3, hash.clone(), ReportBody::Utility(u))),
        ("subgroups".to_string(), EvalReport::new("cfg".into(), 4, hash.clone(), ReportBody::Subgroups(sub))),
        ("fidelity".to_string(), EvalReport::new("cfg".into(), 6, hash, ReportBody::Fidelity(fid))),
    ];
    for (_, r) in &reports {
        r.validate().unwrap();
    }
    let text = render_reports(&reports).unwrap();
    assert!(text.contains("Δ_TSTR") && text.contains("DiscAUC"));
}

#[test]
fn sweep_isolates_configurations_and_is_stable() {
    let t = toy(400, 7);
    let p = EvalProtocol {
        n_synth: 1,
        n_models: 1,
        ..tiny_protocol()
    };
    let grid = &default_grid()[..3];
    let a = weight_sweep(splits(&t), &tiny_generator(), grid, &p, &RngStream::new(8)).unwrap();
    let b = weight_sweep(splits(&t), &tiny_generator(), grid, &p, &RngStream::new(8)).unwrap();
    assert_eq!(a, b);
    let mut idx: Vec<usize> = a.iter().map(|e| e.index).collect();
    idx.sort();
    assert_eq!(idx, vec![0, 1, 2]);
    for e in &a {
        assert_eq!(e.weights, grid[e.index]);
        assert!(e.report.is_some() || e.error.is_some());
    }
}
