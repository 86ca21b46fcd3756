use latdiff::autoencoder::{encode_cohort, train_vae, VaeLossConfig, VaeTrainConfig};
use latdiff::data::{normalize, synth_toy_cohort, ToyPreset};
use latdiff::numerics::RngStream;

fn toy_train(n: usize) -> latdiff::data::Cohort {
    let preset = ToyPreset {
        n,
        ..ToyPreset::icu_toy_v1()
    };
    normalize(&synth_toy_cohort(&preset, 1).unwrap(), None).unwrap()
}

#[test]
fn training_halves_reconstruction_loss() {
    let cohort = toy_train(2000);
    let cfg = VaeTrainConfig {
        enc_hidden: 32,
        dec_hidden: 32,
        epochs: 15,
        loss: VaeLossConfig {
            lambda_mmd: 0.1,
            lambda_cons: 0.1,
            ..VaeLossConfig::default()
        },
        ..VaeTrainConfig::default()
    };
    let t0 = std::time::Instant::now();
    let (vae, log) = train_vae(&cohort, &cfg, &RngStream::new(3)).unwrap();
    eprintln!("vae training took {:?}", t0.elapsed());
    let first = log.epochs.first().unwrap().recon;
    let last = log.epochs.last().unwrap().recon;
    eprintln!("recon {first} -> {last}");
    assert!(last <= 0.5 * first, "{first} -> {last}");
    let latents = encode_cohort(&vae, &cohort).unwrap();
    assert_eq!(latents.len(), cohort.len());
    assert!(latents.iter().all(|z| z.iter().all(|v| v.is_finite())));
}

#[test]
fn training_is_deterministic() {
    let cohort = toy_train(200);
    let cfg = VaeTrainConfig {
        enc_hidden: 8,
        dec_hidden: 8,
        epochs: 2,
        ..VaeTrainConfig::default()
    };
    let a = train_vae(&cohort, &cfg, &RngStream::new(5)).unwrap();
    let b = train_vae(&cohort, &cfg, &RngStream::new(5)).unwrap();
    assert_eq!(a, b);
    let c = train_vae(&cohort, &cfg, &RngStream::new(6)).unwrap();
    assert_ne!(a.0, c.0);
}

#[test]
fn unnormalized_cohort_is_rejected() {
    let preset = ToyPreset {
        n: 10,
        ..ToyPreset::icu_toy_v1()
    };
    let raw = synth_toy_cohort(&preset, 1).unwrap();
    assert!(train_vae(&raw, &VaeTrainConfig::default(), &RngStream::new(1)).is_err());
}
