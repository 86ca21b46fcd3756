use ndarray::{concatenate, s, Array2, Axis};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::denoiser::{guide, stack_latents, unstack_latent, DenoiserArch, DenoiserParams};
use super::loss::{diffusion_loss_and_grads, DiffusionLossConfig, DiffusionLossTerms};
use super::schedule::{make_schedule, NoiseSchedule, ScheduleKind};
use crate::autodiff::{Adam, Mat};
use crate::autoencoder::{encode_cohort, VaeParams};
use crate::checkpoint::config_hash;
use crate::data::{denormalize, forward_fill, Cohort, CohortMeta, Condition, PatientRecord};
use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::training::{ensure_finite, minibatches};

/// Records decoded per batch during generation.
const SAMPLE_CHUNK: usize = 256;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionTrainConfig {
    pub hidden: usize,
    pub time_embed_dim: usize,
    /// Number of diffusion steps `T_diff`.
    pub steps: usize,
    pub beta_min: f64,
    pub beta_max: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub clip_norm: Option<f64>,
    /// Decay of the exponential moving average of weights that is returned
    /// instead of the raw final iterate; `None` returns the raw iterate.
    pub ema_decay: Option<f64>,
    /// Classifier-free guidance weight `w` stored in the bundle.
    pub guidance_weight: f64,
    pub loss: DiffusionLossConfig,
}

impl Default for DiffusionTrainConfig {
    fn default() -> Self {
        DiffusionTrainConfig {
            hidden: 64,
            time_embed_dim: 16,
            steps: 100,
            beta_min: 1e-3,
            beta_max: 0.1,
            lr: 1e-3,
            epochs: 100,
            batch_size: 64,
            clip_norm: Some(10.0),
            ema_decay: Some(0.995),
            guidance_weight: 1.0,
            loss: DiffusionLossConfig::default(),
        }
    }
}

impl DiffusionTrainConfig {
    pub fn schedule(&self) -> Result<NoiseSchedule> {
        make_schedule(self.steps, ScheduleKind::Linear, self.beta_min, self.beta_max)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiffusionEpochLog {
    pub epoch: usize,
    pub base: f64,
    pub mmd: Option<f64>,
    pub consistency: Option<f64>,
    pub total: f64,
    pub null_conditions: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiffusionTrainLog {
    pub epochs: Vec<DiffusionEpochLog>,
    /// Total loss of every optimizer step, in order.
    pub step_losses: Vec<f64>,
}

/// Per-cell mean and standard deviation of the VAE latents (`T·d` entries).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatentStats {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
}

impl LatentStats {
    pub fn fit(latents: &[Mat]) -> Result<Self> {
        let first = latents.first().ok_or_else(|| Error::input("no latents to standardize"))?;
        let dim = first.len();
        let n = latents.len() as f64;
        let mut mean = vec![0.0; dim];
        for z in latents {
            for (m, v) in mean.iter_mut().zip(z.iter()) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; dim];
        for z in latents {
            for ((s, v), m) in var.iter_mut().zip(z.iter()).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let sd = var.into_iter().map(|v| if v.sqrt() > 1e-8 { v.sqrt() } else { 1.0 }).collect();
        Ok(LatentStats { mean, sd })
    }

    pub fn identity(dim: usize) -> Self {
        LatentStats {
            mean: vec![0.0; dim],
            sd: vec![1.0; dim],
        }
    }

    pub fn standardize(&self, z: &Mat) -> Mat {
        let mut out = z.clone();
        for (v, (m, s)) in out.iter_mut().zip(self.mean.iter().zip(&self.sd)) {
            *v = (*v - m) / s;
        }
        out
    }

    pub fn unstandardize(&self, z: &Mat) -> Mat {
        let mut out = z.clone();
        for (v, (m, s)) in out.iter_mut().zip(self.mean.iter().zip(&self.sd)) {
            *v = *v * s + m;
        }
        out
    }
}

/// Everything needed to sample conditionally: both trained phases, the
/// schedule, the guidance weight and the training cohort's metadata.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GeneratorBundle {
    pub vae: VaeParams,
    pub denoiser: DenoiserParams,
    pub schedule: NoiseSchedule,
    pub guidance_weight: f64,
    pub latent_stats: LatentStats,
    /// Metadata of the normalized training cohort (feature names, fill
    /// values, normalization statistics).
    pub cohort_meta: CohortMeta,
    pub config_hash: String,
}

pub const BUNDLE_KIND: &str = "generator_bundle";

impl GeneratorBundle {
    pub fn validate(&self) -> Result<()> {
        self.vae.validate()?;
        self.denoiser.validate()?;
        self.schedule.validate()?;
        let (va, da) = (self.vae.arch, self.denoiser.arch);
        let flat = va.t * va.latent_dim;
        let consistent = va.t == da.t
            && va.latent_dim == da.latent_dim
            && self.latent_stats.mean.len() == flat
            && self.latent_stats.sd.len() == flat
            && self.cohort_meta.t == va.t
            && self.cohort_meta.f == va.f
            && self.cohort_meta.normalization.is_some();
        if !consistent {
            return Err(Error::Schema {
                location: "generator bundle".into(),
                detail: "VAE, denoiser, latent statistics and cohort metadata disagree on shapes".into(),
            });
        }
        if !(self.guidance_weight >= 0.0) {
            return Err(Error::Config("guidance weight must be non-negative".into()));
        }
        Ok(())
    }
}

/// Adam over minibatches of standardized latents with their conditions.
pub fn train_diffusion(
    latents: &[Mat],
    conds: &[Condition],
    cfg: &DiffusionTrainConfig,
    rng: &RngStream,
) -> Result<(DenoiserParams, DiffusionTrainLog)> {
    let first = latents.first().ok_or_else(|| Error::input("train_diffusion needs latents"))?;
    if latents.len() != conds.len() {
        return Err(Error::input("one condition per latent is required"));
    }
    if cfg.batch_size == 0 || !(cfg.lr > 0.0) {
        return Err(Error::Config("diffusion batch_size and lr must be positive".into()));
    }
    if cfg.ema_decay.is_some_and(|d| !(0.0..1.0).contains(&d)) {
        return Err(Error::Config("ema_decay must lie in [0, 1)".into()));
    }
    cfg.loss.validate()?;
    let schedule = cfg.schedule()?;
    let arch = DenoiserArch {
        t: first.nrows(),
        latent_dim: first.ncols(),
        hidden: cfg.hidden,
        time_embed_dim: cfg.time_embed_dim,
    };
    let data = stack_latents(latents, arch.flat_dim());
    let mut den = DenoiserParams::new(arch, &mut rng.child("init"))?;
    let mut opt = Adam::new(&den.params, cfg.lr, cfg.clip_norm);
    let mut ema = den.params.clone();
    let mut log = DiffusionTrainLog::default();
    for epoch in 0..cfg.epochs {
        let epoch_rng = rng.child_indexed("epoch", epoch);
        let batches = minibatches(latents.len(), cfg.batch_size, &mut epoch_rng.child("shuffle"));
        let mut steps: Vec<DiffusionLossTerms> = Vec::with_capacity(batches.len());
        for (s, idx) in batches.iter().enumerate() {
            let z0 = data.select(Axis(0), idx);
            let bc: Vec<Condition> = idx.iter().map(|&i| conds[i]).collect();
            let (terms, grads) =
                diffusion_loss_and_grads(&den, &schedule, &z0, &bc, &cfg.loss, &mut epoch_rng.child_indexed("step", s))?;
            let stage = format!("train_diffusion epoch {epoch} step {s}");
            ensure_finite(&stage, "noise-prediction loss", terms.base)?;
            if let Some(m) = terms.mmd {
                ensure_finite(&stage, "MMD", m)?;
            }
            if let Some(c) = terms.consistency {
                ensure_finite(&stage, "consistency", c)?;
            }
            ensure_finite(&stage, "total loss", terms.total)?;
            opt.step(&mut den.params, &grads);
            if let Some(decay) = cfg.ema_decay {
                ema.ema_update(&den.params, decay);
            }
            log.step_losses.push(terms.total);
            steps.push(terms);
        }
        let n = steps.len() as f64;
        let avg_opt = |f: &dyn Fn(&DiffusionLossTerms) -> Option<f64>| {
            steps.iter().map(f).collect::<Option<Vec<f64>>>().map(|v| v.iter().sum::<f64>() / n)
        };
        log.epochs.push(DiffusionEpochLog {
            epoch,
            base: steps.iter().map(|t| t.base).sum::<f64>() / n,
            mmd: avg_opt(&|t| t.mmd),
            consistency: avg_opt(&|t| t.consistency),
            total: steps.iter().map(|t| t.total).sum::<f64>() / n,
            null_conditions: steps.iter().map(|t| t.null_conditions).sum(),
        });
    }
    if cfg.ema_decay.is_some() {
        den.params = ema;
    }
    Ok((den, log))
}

/// Phase 2: encode the normalized training cohort with a trained VAE, then
/// fit the conditional denoiser on the standardized posterior means.
pub fn fit_generator(
    vae: &VaeParams,
    train: &Cohort,
    cfg: &DiffusionTrainConfig,
    rng: &RngStream,
) -> Result<(GeneratorBundle, DiffusionTrainLog)> {
    if !train.is_normalized() {
        return Err(Error::input("the generator is trained on a normalized cohort"));
    }
    let latents = encode_cohort(vae, train)?;
    let stats = LatentStats::fit(&latents)?;
    let standardized: Vec<Mat> = latents.iter().map(|z| stats.standardize(z)).collect();
    let (denoiser, log) = train_diffusion(&standardized, &train.conditions(), cfg, rng)?;
    let bundle = GeneratorBundle {
        vae: vae.clone(),
        denoiser,
        schedule: cfg.schedule()?,
        guidance_weight: cfg.guidance_weight,
        latent_stats: stats,
        cohort_meta: train.meta.clone(),
        config_hash: config_hash(cfg),
    };
    bundle.validate()?;
    Ok((bundle, log))
}

/// Guided noise prediction for a batch where every row is at step `t`.
fn guided_batch(den: &DenoiserParams, z: &Mat, t: usize, conds: &[Option<Condition>], w: f64) -> Result<Mat> {
    let b = z.nrows();
    if w == 0.0 {
        return den.predict(z, &vec![t; b], conds);
    }
    let both = concatenate![Axis(0), *z, *z];
    let mut all = conds.to_vec();
    all.extend(std::iter::repeat(None).take(b));
    let out = den.predict(&both, &vec![t; 2 * b], &all)?;
    Ok(guide(
        &out.slice(s![..b, ..]).to_owned(),
        &out.slice(s![b.., ..]).to_owned(),
        w,
    ))
}

/// Ancestral DDPM sampling in standardized latent space. Row `i` draws all of
/// its noise from `rngs[i]`, so results do not depend on batch composition.
pub(crate) fn reverse_process(
    den: &DenoiserParams,
    schedule: &NoiseSchedule,
    w: f64,
    conds: &[Condition],
    rngs: &mut [RngStream],
) -> Result<Mat> {
    let cond_opts: Vec<Option<Condition>> = conds.iter().copied().map(Some).collect();
    ancestral(schedule, den.arch.flat_dim(), rngs, |z, t| guided_batch(den, z, t, &cond_opts, w))
}

/// The reverse chain for any noise predictor `eps(z_t, t)` over a batch.
pub(crate) fn ancestral<F>(schedule: &NoiseSchedule, dim: usize, rngs: &mut [RngStream], mut eps: F) -> Result<Mat>
where
    F: FnMut(&Mat, usize) -> Result<Mat>,
{
    let b = rngs.len();
    let mut z = Array2::zeros((b, dim));
    for (i, r) in rngs.iter_mut().enumerate() {
        z.row_mut(i).assign(&r.normal_matrix(1, dim).row(0));
    }
    for t in (0..schedule.steps()).rev() {
        let e = eps(&z, t)?;
        let coef = schedule.beta[t] / (1.0 - schedule.alpha_bar[t]).sqrt();
        z.scaled_add(-coef, &e);
        z *= 1.0 / schedule.alpha[t].sqrt();
        if t > 0 {
            let sigma = schedule.posterior_variance(t).sqrt();
            for (i, r) in rngs.iter_mut().enumerate() {
                z.row_mut(i).scaled_add(sigma, &r.normal_matrix(1, dim).row(0));
            }
        }
        if let Some(i) = z.rows().into_iter().position(|row| row.iter().any(|v| !v.is_finite())) {
            return Err(Error::numeric(
                format!("sample_latent step {t}"),
                format!("non-finite latent in row {i}"),
            ));
        }
    }
    Ok(z)
}

/// One conditional latent (`T×d`, VAE units).
pub fn sample_latent(cond: &Condition, bundle: &GeneratorBundle, rng: &mut RngStream) -> Result<Mat> {
    let a = bundle.denoiser.arch;
    let z = reverse_process(
        &bundle.denoiser,
        &bundle.schedule,
        bundle.guidance_weight,
        std::slice::from_ref(cond),
        std::slice::from_mut(rng),
    )?;
    Ok(bundle.latent_stats.unstandardize(&unstack_latent(&z, 0, a.t, a.latent_dim)))
}

/// Conditional latents for every condition; record `i` uses the child stream
/// `latent/i` of `rng`.
pub fn sample_latents(conds: &[Condition], bundle: &GeneratorBundle, rng: &RngStream) -> Result<Vec<Mat>> {
    let a = bundle.denoiser.arch;
    let chunks: Vec<(usize, &[Condition])> = conds
        .chunks(SAMPLE_CHUNK)
        .enumerate()
        .map(|(c, chunk)| (c * SAMPLE_CHUNK, chunk))
        .collect();
    let per_chunk: Result<Vec<Vec<Mat>>> = chunks
        .par_iter()
        .map(|&(start, chunk)| {
            let mut rngs: Vec<RngStream> = (0..chunk.len()).map(|i| rng.child_indexed("latent", start + i)).collect();
            let z = reverse_process(&bundle.denoiser, &bundle.schedule, bundle.guidance_weight, chunk, &mut rngs)?;
            Ok((0..chunk.len())
                .map(|i| bundle.latent_stats.unstandardize(&unstack_latent(&z, i, a.t, a.latent_dim)))
                .collect())
        })
        .collect();
    Ok(per_chunk?.into_iter().flatten().collect())
}

/// Decode latents into records: mask probabilities are thresholded at 0.5 and
/// unobserved cells are forward-filled, exactly as for ingested data.
pub fn decode_records(bundle: &GeneratorBundle, latents: &[Mat], conds: &[Condition]) -> Result<Vec<PatientRecord>> {
    let fill = bundle.cohort_meta.fill_values_in_record_units();
    let mut records = Vec::with_capacity(latents.len());
    for (c, chunk) in latents.chunks(SAMPLE_CHUNK).enumerate() {
        for (k, (cont, logits)) in bundle.vae.decode_batch(chunk)?.into_iter().enumerate() {
            let i = c * SAMPLE_CHUNK + k;
            let raw = Array2::from_shape_fn(cont.dim(), |ix| (logits[ix] >= 0.0).then_some(cont[ix]));
            let (values, mask) = forward_fill(&raw, &fill);
            records.push(PatientRecord {
                id: i as u64,
                values,
                mask,
                condition: conds[i],
            });
        }
    }
    Ok(records)
}

/// Synthetic cohort in the bundle's normalized units, one record per
/// condition, with conditions copied verbatim.
pub fn generate_normalized(bundle: &GeneratorBundle, conds: &[Condition], rng: &RngStream) -> Result<Cohort> {
    if conds.is_empty() {
        return Err(Error::input("generate needs at least one condition"));
    }
    let latents = sample_latents(conds, bundle, rng)?;
    let records = decode_records(bundle, &latents, conds)?;
    Cohort::new(bundle.cohort_meta.clone(), records)
}

/// Synthetic cohort in raw feature units.
pub fn generate(bundle: &GeneratorBundle, conds: &[Condition], rng: &RngStream) -> Result<Cohort> {
    denormalize(&generate_normalized(bundle, conds, rng)?)
}
