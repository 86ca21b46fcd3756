use serde::{Deserialize, Serialize};

use super::loss::{vae_batch_grads, VaeBatch, VaeLossConfig, VaeLossTerms};
use super::model::{VaeArch, VaeParams};
use crate::autodiff::{Adam, Mat};
use crate::data::{Cohort, PatientRecord};
use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::training::{ensure_finite, minibatches};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VaeTrainConfig {
    pub latent_dim: usize,
    pub enc_hidden: usize,
    pub dec_hidden: usize,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Global gradient-norm clip; `None` disables clipping.
    pub clip_norm: Option<f64>,
    pub loss: VaeLossConfig,
}

impl Default for VaeTrainConfig {
    fn default() -> Self {
        VaeTrainConfig {
            latent_dim: 8,
            enc_hidden: 64,
            dec_hidden: 64,
            lr: 1e-3,
            epochs: 100,
            batch_size: 64,
            clip_norm: Some(10.0),
            loss: VaeLossConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VaeEpochLog {
    pub epoch: usize,
    pub recon: f64,
    pub kld: f64,
    pub mmd: Option<f64>,
    pub consistency: Option<f64>,
    pub total: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VaeTrainLog {
    pub epochs: Vec<VaeEpochLog>,
}

fn epoch_means(epoch: usize, steps: &[VaeLossTerms]) -> VaeEpochLog {
    let n = steps.len() as f64;
    let avg = |f: &dyn Fn(&VaeLossTerms) -> f64| steps.iter().map(f).sum::<f64>() / n;
    let avg_opt = |f: &dyn Fn(&VaeLossTerms) -> Option<f64>| {
        let vals: Option<Vec<f64>> = steps.iter().map(f).collect();
        vals.map(|v| v.iter().sum::<f64>() / n)
    };
    VaeEpochLog {
        epoch,
        recon: avg(&|t| t.recon),
        kld: avg(&|t| t.kld),
        mmd: avg_opt(&|t| t.mmd),
        consistency: avg_opt(&|t| t.consistency),
        total: avg(&|t| t.total),
    }
}

fn check_terms(epoch: usize, step: usize, t: &VaeLossTerms) -> Result<()> {
    let stage = format!("train_vae epoch {epoch} step {step}");
    ensure_finite(&stage, "reconstruction MSE", t.mse)?;
    ensure_finite(&stage, "mask cross-entropy", t.bce)?;
    ensure_finite(&stage, "KL divergence", t.kld)?;
    if let Some(m) = t.mmd {
        ensure_finite(&stage, "MMD", m)?;
    }
    if let Some(c) = t.consistency {
        ensure_finite(&stage, "consistency", c)?;
    }
    ensure_finite(&stage, "total loss", t.total)
}

/// Adam over shuffled minibatches of a normalized cohort.
pub fn train_vae(train: &Cohort, cfg: &VaeTrainConfig, rng: &RngStream) -> Result<(VaeParams, VaeTrainLog)> {
    if !train.is_normalized() {
        return Err(Error::input("train_vae expects a normalized cohort"));
    }
    if train.is_empty() {
        return Err(Error::input("train_vae needs at least one record"));
    }
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(Error::Config("VAE batch_size and lr must be positive".into()));
    }
    cfg.loss.validate()?;
    let arch = VaeArch {
        t: train.meta.t,
        f: train.meta.f,
        latent_dim: cfg.latent_dim,
        enc_hidden: cfg.enc_hidden,
        dec_hidden: cfg.dec_hidden,
    };
    let mut vae = VaeParams::new(arch, &mut rng.child("init"))?;
    let mut opt = Adam::new(&vae.params, cfg.lr, cfg.clip_norm);
    let mut log = VaeTrainLog::default();
    for epoch in 0..cfg.epochs {
        let epoch_rng = rng.child_indexed("epoch", epoch);
        let batches = minibatches(train.len(), cfg.batch_size, &mut epoch_rng.child("shuffle"));
        let mut steps = Vec::with_capacity(batches.len());
        for (s, idx) in batches.iter().enumerate() {
            let records: Vec<&PatientRecord> = idx.iter().map(|&i| &train.records[i]).collect();
            let batch = VaeBatch::new(&records);
            let (terms, grads) = vae_batch_grads(&vae, &batch, &cfg.loss, &mut epoch_rng.child_indexed("step", s))?;
            check_terms(epoch, s, &terms)?;
            opt.step(&mut vae.params, &grads);
            steps.push(terms);
        }
        log.epochs.push(epoch_means(epoch, &steps));
    }
    if !vae.params.is_finite() {
        return Err(Error::numeric("train_vae", "parameters became non-finite"));
    }
    Ok((vae, log))
}

/// Posterior means (`T×d` each) for every record, in cohort order.
pub fn encode_cohort(vae: &VaeParams, cohort: &Cohort) -> Result<Vec<Mat>> {
    let refs: Vec<&PatientRecord> = cohort.records.iter().collect();
    let mut out = Vec::with_capacity(refs.len());
    for chunk in refs.chunks(256) {
        out.extend(vae.encode_batch(chunk)?.into_iter().map(|(mu, _)| mu));
    }
    Ok(out)
}
