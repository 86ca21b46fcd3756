use std::ffi::{CStr, CString};
use std::path::PathBuf;
use std::process::Command;
use std::ptr;

use latdiff::checkpoint::{self, Stamped};
use latdiff::data::{normalize, synth_toy_cohort, ToyPreset};
use latdiff::diffusion::BUNDLE_KIND;
use latdiff::evaluation::{train_generator, GeneratorConfig};
use latdiff::numerics::RngStream;
use latdiff_ffi::*;

fn last_error() -> String {
    unsafe { CStr::from_ptr(latdiff_last_error_message()) }.to_string_lossy().into_owned()
}

fn toy(n: usize, seed: u64) -> *mut LatdiffCohort {
    let mut c = ptr::null_mut();
    assert_eq!(latdiff_cohort_toy(n, seed, &mut c), LatdiffStatus::Ok);
    c
}

#[test]
fn cohort_accessors_and_errors() {
    let c = toy(50, 1);
    let (mut n, mut t, mut f) = (0, 0, 0);
    assert_eq!(latdiff_cohort_shape(c, &mut n, &mut t, &mut f), LatdiffStatus::Ok);
    assert_eq!((n, t, f), (50, 8, 4));

    let mut buf = vec![0.0; t * f];
    assert_eq!(latdiff_cohort_values(c, 3, buf.as_mut_ptr(), buf.len()), LatdiffStatus::Ok);
    let direct = synth_toy_cohort(&ToyPreset { n: 50, ..ToyPreset::icu_toy_v1() }, 1).unwrap();
    assert_eq!(buf, direct.records[3].values.iter().copied().collect::<Vec<_>>());

    assert_eq!(latdiff_cohort_values(c, 50, buf.as_mut_ptr(), buf.len()), LatdiffStatus::OutOfRange);
    assert!(last_error().contains("index 50"));
    assert_eq!(latdiff_cohort_values(c, 0, buf.as_mut_ptr(), 3), LatdiffStatus::BufferTooSmall);
    assert_eq!(latdiff_cohort_shape(ptr::null(), &mut n, &mut t, &mut f), LatdiffStatus::NullPointer);
    assert_eq!(latdiff_cohort_toy(0, 1, &mut ptr::null_mut()), LatdiffStatus::Config);

    let mut outcomes = vec![9u8; n];
    assert_eq!(latdiff_cohort_outcomes(c, outcomes.as_mut_ptr(), n), LatdiffStatus::Ok);
    assert!(outcomes.iter().all(|o| *o <= 1));
    assert_eq!(last_error(), "");
    latdiff_cohort_free(c);
    latdiff_cohort_free(ptr::null_mut());
}

#[test]
fn auroc_matches_library() {
    let scores = [0.9, 0.2, 0.8, 0.3];
    let labels = [1u8, 0, 0, 1];
    let mut out = 0.0;
    assert_eq!(latdiff_auroc(scores.as_ptr(), labels.as_ptr(), 4, &mut out), LatdiffStatus::Ok);
    assert_eq!(out, 0.75);
    assert_eq!(latdiff_auroc(scores.as_ptr(), [1u8; 4].as_ptr(), 4, &mut out), LatdiffStatus::UndefinedMetric);
    assert_eq!(latdiff_auroc(ptr::null(), labels.as_ptr(), 4, &mut out), LatdiffStatus::NullPointer);
}

#[test]
fn save_load_and_generate() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = CString::new(tmp.path().join("toy").to_str().unwrap()).unwrap();
    let c = toy(40, 2);
    assert_eq!(latdiff_cohort_save(c, dir.as_ptr()), LatdiffStatus::Ok);
    let mut back = ptr::null_mut();
    assert_eq!(latdiff_cohort_load(dir.as_ptr(), &mut back), LatdiffStatus::Ok);
    let missing = CString::new(tmp.path().join("nope").to_str().unwrap()).unwrap();
    assert_eq!(latdiff_cohort_load(missing.as_ptr(), &mut back), LatdiffStatus::Prerequisite);
    let bad = [0xffu8, 0];
    assert_eq!(latdiff_cohort_load(bad.as_ptr().cast(), &mut back), LatdiffStatus::InvalidUtf8);

    let train = normalize(&synth_toy_cohort(&ToyPreset { n: 200, ..ToyPreset::icu_toy_v1() }, 3).unwrap(), None).unwrap();
    let mut cfg = GeneratorConfig::default();
    cfg.vae.enc_hidden = 4;
    cfg.vae.dec_hidden = 4;
    cfg.vae.latent_dim = 2;
    cfg.vae.epochs = 1;
    cfg.diffusion.hidden = 4;
    cfg.diffusion.steps = 10;
    cfg.diffusion.epochs = 1;
    let bundle = train_generator(&train, &cfg, &RngStream::new(4)).unwrap();
    let ckpt = tmp.path().join("generator.json");
    let stamped = Stamped {
        config_hash: bundle.config_hash.clone(),
        seed: 4,
        value: bundle,
    };
    checkpoint::save(&ckpt, BUNDLE_KIND, &stamped).unwrap();
    let plain = tmp.path().join("bare.json");
    checkpoint::save(&plain, BUNDLE_KIND, &stamped.value).unwrap();

    let tdir = CString::new(tmp.path().join("train").to_str().unwrap()).unwrap();
    latdiff::data::save_cohort(&train, &PathBuf::from(tdir.to_str().unwrap())).unwrap();
    let mut template = ptr::null_mut();
    assert_eq!(latdiff_cohort_load(tdir.as_ptr(), &mut template), LatdiffStatus::Ok);

    for path in [&ckpt, &plain] {
        let p = CString::new(path.to_str().unwrap()).unwrap();
        let mut g = ptr::null_mut();
        assert_eq!(latdiff_generator_load(p.as_ptr(), &mut g), LatdiffStatus::Ok, "{}", last_error());
        let mut s = ptr::null_mut();
        assert_eq!(latdiff_generator_synthesize(g, template, 5, &mut s), LatdiffStatus::Ok, "{}", last_error());
        let (mut n, mut t, mut f) = (0, 0, 0);
        latdiff_cohort_shape(s, &mut n, &mut t, &mut f);
        assert_eq!((n, t, f), (200, 8, 4));
        // Raw-unit templates do not match the generator's normalization.
        assert_eq!(latdiff_generator_synthesize(g, c, 5, &mut s), LatdiffStatus::Input);
        latdiff_cohort_free(s);
        latdiff_generator_free(g);
    }
    latdiff_cohort_free(template);
    latdiff_cohort_free(back);
    latdiff_cohort_free(c);
}

const C_PROGRAM: &str = r#"
#include <stdio.h>
#include <string.h>
#include "latdiff.h"

int main(void) {
    LatdiffCohort *c = NULL;
    if (latdiff_cohort_toy(30, 7, &c) != LATDIFF_STATUS_OK) return 1;
    size_t n = 0, t = 0, f = 0;
    if (latdiff_cohort_shape(c, &n, &t, &f) != LATDIFF_STATUS_OK || n != 30 || t != 8 || f != 4) return 2;
    double values[32];
    if (latdiff_cohort_values(c, 0, values, 32) != LATDIFF_STATUS_OK) return 3;
    if (latdiff_cohort_values(c, 0, values, 2) != LATDIFF_STATUS_BUFFER_TOO_SMALL) return 4;
    if (strlen(latdiff_last_error_message()) == 0) return 5;
    double scores[4] = {0.9, 0.2, 0.8, 0.3};
    uint8_t labels[4] = {1, 0, 0, 1};
    double auc = 0.0;
    if (latdiff_auroc(scores, labels, 4, &auc) != LATDIFF_STATUS_OK || auc != 0.75) return 6;
    latdiff_cohort_free(c);
    printf("ok %s\n", latdiff_version());
    return 0;
}
"#;

#[test]
fn c_program_links_against_generated_header() {
    if Command::new("cc").arg("--version").output().is_err() {
        eprintln!("no C compiler available; skipping");
        return;
    }
    let deps = std::env::current_exe().unwrap().parent().unwrap().to_path_buf();
    let lib = deps.join("liblatdiff_ffi.so");
    assert!(lib.exists(), "{} missing", lib.display());
    let include = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("include");
    let tmp = tempfile::tempdir().unwrap();
    let src = tmp.path().join("main.c");
    std::fs::write(&src, C_PROGRAM).unwrap();
    let exe = tmp.path().join("main");
    let status = Command::new("cc")
        .args(["-std=c11", "-Wall", "-Werror"])
        .arg("-I")
        .arg(&include)
        .arg(&src)
        .arg(&lib)
        .arg(format!("-Wl,-rpath,{}", deps.display()))
        .arg("-o")
        .arg(&exe)
        .status()
        .unwrap();
    assert!(status.success());
    let out = Command::new(&exe).output().unwrap();
    assert!(out.status.success(), "exit {:?}", out.status.code());
    assert_eq!(String::from_utf8(out.stdout).unwrap(), format!("ok {}\n", env!("CARGO_PKG_VERSION")));
}
