use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::model::VaeParams;
use crate::autodiff::{Graph, Mat, Var};
use crate::data::batch::{flat_mask, flat_values, step_inputs};
use crate::data::PatientRecord;
use crate::error::{Error, Result};
use crate::numerics::{median_bandwidth, RngStream};

/// Probability clamp inside the mask cross-entropy.
pub const BCE_EPS: f64 = 1e-6;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VaeLossConfig {
    pub beta: f64,
    pub lambda_mmd: f64,
    pub lambda_cons: f64,
    /// Standard deviation of the input perturbation, in normalized units.
    pub cons_sigma: f64,
    /// Fixed RBF bandwidth; `None` uses the median heuristic per batch.
    pub mmd_bandwidth: Option<f64>,
}

impl Default for VaeLossConfig {
    fn default() -> Self {
        VaeLossConfig {
            beta: 0.1,
            lambda_mmd: 0.0,
            lambda_cons: 0.0,
            cons_sigma: 0.1,
            mmd_bandwidth: None,
        }
    }
}

impl VaeLossConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.beta >= 0.0
            && self.lambda_mmd >= 0.0
            && self.lambda_cons >= 0.0
            && self.cons_sigma >= 0.0
            && self.mmd_bandwidth.map_or(true, |b| b > 0.0 && b.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid VAE loss weights {self:?}")))
        }
    }
}

/// Value of each loss term for one batch.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VaeLossTerms {
    pub mse: f64,
    pub bce: f64,
    pub recon: f64,
    pub kld: f64,
    pub mmd: Option<f64>,
    pub consistency: Option<f64>,
    pub total: f64,
}

/// Dense tensors for one minibatch.
pub struct VaeBatch {
    pub inputs: Vec<Mat>,
    pub values: Mat,
    pub mask: Mat,
}

impl VaeBatch {
    pub fn new(records: &[&PatientRecord]) -> Self {
        VaeBatch {
            inputs: step_inputs(records),
            values: flat_values(records),
            mask: flat_mask(records),
        }
    }

    pub fn len(&self) -> usize {
        self.values.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn rows(m: &Mat) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Loss graph for one batch. The reparameterization noise is always drawn
/// first; prior samples and perturbations are drawn only when their term is
/// active, so disabling a term leaves the remaining draws unchanged.
pub(crate) fn build_vae_loss(
    vae: &VaeParams,
    g: &mut Graph,
    vars: &[Var],
    batch: &VaeBatch,
    cfg: &VaeLossConfig,
    rng: &mut RngStream,
) -> Result<(Var, VaeLossTerms)> {
    cfg.validate()?;
    let b = batch.len();
    if cfg.lambda_mmd > 0.0 && b < 2 {
        return Err(Error::input("MMD term needs a batch of at least 2 records"));
    }
    let (t_len, f, d) = (vae.arch.t, vae.arch.f, vae.arch.latent_dim);
    let inputs: Vec<Var> = batch.inputs.iter().map(|m| g.constant(m.clone())).collect();
    let enc = vae.encode_graph(g, vars, &inputs);
    let mu = g.concat_cols(&enc.mu);
    let logvar = g.concat_cols(&enc.logvar);

    let noise = g.constant(rng.normal_matrix(b, t_len * d));
    let half = g.scale(logvar, 0.5);
    let std = g.exp(half);
    let spread = g.mul(std, noise);
    let z = g.add(mu, spread);
    let z_steps: Vec<Var> = (0..t_len).map(|t| g.slice_cols(z, t * d, (t + 1) * d)).collect();
    let (cont, logits) = vae.decode_graph(g, vars, &z_steps);
    let cont = g.concat_cols(&cont);
    let logits = g.concat_cols(&logits);

    let cells = (b * t_len * f) as f64;
    let mse_sum = g.sq_err_sum(cont, batch.values.clone());
    let mse = g.scale(mse_sum, 1.0 / cells);
    let bce_sum = g.bce_sum(logits, batch.mask.clone(), BCE_EPS);
    let bce = g.scale(bce_sum, 1.0 / cells);
    let recon = g.add(mse, bce);
    let kld_sum = g.kld_sum(mu, logvar);
    let kld = g.scale(kld_sum, 1.0 / (b * t_len * d) as f64);
    let weighted_kld = g.scale(kld, cfg.beta);
    let mut total = g.add(recon, weighted_kld);

    let mut terms = VaeLossTerms {
        mse: g.scalar(mse),
        bce: g.scalar(bce),
        recon: g.scalar(recon),
        kld: g.scalar(kld),
        ..Default::default()
    };

    if cfg.lambda_mmd > 0.0 {
        let prior = rng.normal_matrix(b, t_len * d);
        let bw = match cfg.mmd_bandwidth {
            Some(bw) => bw,
            None => median_bandwidth(&rows(g.value(z)), &rows(&prior)),
        };
        let prior = g.constant(prior);
        let mmd = g.mmd(z, prior, bw);
        terms.mmd = Some(g.scalar(mmd));
        let w = g.scale(mmd, cfg.lambda_mmd);
        total = g.add(total, w);
    }

    if cfg.lambda_cons > 0.0 {
        let perturbed: Vec<Var> = batch
            .inputs
            .iter()
            .map(|m| {
                let mut p = m.clone();
                let delta: Array2<f64> = rng.normal_matrix(b, f);
                p.slice_mut(ndarray::s![.., ..f]).scaled_add(cfg.cons_sigma, &delta);
                g.constant(p)
            })
            .collect();
        let enc2 = vae.encode_graph(g, vars, &perturbed);
        let mu2 = g.concat_cols(&enc2.mu);
        let diff = g.sq_diff_sum(mu, mu2);
        let cons = g.scale(diff, 1.0 / (b * t_len * d) as f64);
        terms.consistency = Some(g.scalar(cons));
        let w = g.scale(cons, cfg.lambda_cons);
        total = g.add(total, w);
    }

    terms.total = g.scalar(total);
    Ok((total, terms))
}

fn check_batch(vae: &VaeParams, records: &[&PatientRecord]) -> Result<()> {
    if records.is_empty() {
        return Err(Error::input("empty VAE batch"));
    }
    for r in records {
        if r.values.dim() != (vae.arch.t, vae.arch.f) {
            return Err(Error::input(format!("record {} does not match the VAE shape", r.id)));
        }
    }
    Ok(())
}

/// `L_recon + β·L_KLD + λ_mmd·MMD + λ_cons·consistency` for one batch.
pub fn vae_loss_enhanced(
    vae: &VaeParams,
    records: &[&PatientRecord],
    cfg: &VaeLossConfig,
    rng: &mut RngStream,
) -> Result<VaeLossTerms> {
    check_batch(vae, records)?;
    let mut g = Graph::new();
    let vars = vae.params.attach_const(&mut g);
    build_vae_loss(vae, &mut g, &vars, &VaeBatch::new(records), cfg, rng).map(|(_, t)| t)
}

/// `L_recon + β·L_KLD`.
pub fn vae_loss_base(vae: &VaeParams, records: &[&PatientRecord], beta: f64, rng: &mut RngStream) -> Result<f64> {
    let cfg = VaeLossConfig {
        beta,
        lambda_mmd: 0.0,
        lambda_cons: 0.0,
        ..VaeLossConfig::default()
    };
    vae_loss_enhanced(vae, records, &cfg, rng).map(|t| t.total)
}

/// Loss terms plus the gradient of the total with respect to every parameter.
pub fn vae_loss_and_grads(
    vae: &VaeParams,
    records: &[&PatientRecord],
    cfg: &VaeLossConfig,
    rng: &mut RngStream,
) -> Result<(VaeLossTerms, Vec<Mat>)> {
    check_batch(vae, records)?;
    vae_batch_grads(vae, &VaeBatch::new(records), cfg, rng)
}

pub(crate) fn vae_batch_grads(
    vae: &VaeParams,
    batch: &VaeBatch,
    cfg: &VaeLossConfig,
    rng: &mut RngStream,
) -> Result<(VaeLossTerms, Vec<Mat>)> {
    let mut g = Graph::new();
    let vars = vae.params.attach(&mut g);
    let (total, terms) = build_vae_loss(vae, &mut g, &vars, batch, cfg, rng)?;
    let grads = g.backward(total);
    Ok((terms, vae.params.collect_grads(&grads, &vars)))
}

/// Mean squared error over value cells plus mean mask cross-entropy, for one
/// record.
pub fn recon_loss(record: &PatientRecord, cont_hat: &Mat, mask_logits: &Mat) -> Result<f64> {
    let dim = record.values.dim();
    if cont_hat.dim() != dim || mask_logits.dim() != dim {
        return Err(Error::input("reconstruction shapes do not match the record"));
    }
    let cells = (dim.0 * dim.1) as f64;
    let target_mask = record.mask.mapv(|m| if m { 1.0 } else { 0.0 });
    let mut g = Graph::new();
    let c = g.constant(cont_hat.clone());
    let l = g.constant(mask_logits.clone());
    let mse = g.sq_err_sum(c, record.values.clone());
    let bce = g.bce_sum(l, target_mask, BCE_EPS);
    Ok(g.scalar(mse) / cells + g.scalar(bce) / cells)
}

/// Mean over cells of `½(exp(logvar) + mu² − 1 − logvar)`.
pub fn kld_loss(mu: &Mat, logvar: &Mat) -> Result<f64> {
    if mu.dim() != logvar.dim() || mu.is_empty() {
        return Err(Error::input("kld_loss needs equal, non-empty shapes"));
    }
    let mut g = Graph::new();
    let m = g.constant(mu.clone());
    let l = g.constant(logvar.clone());
    let k = g.kld_sum(m, l);
    Ok(g.scalar(k) / mu.len() as f64)
}

/// `MSE(f(x), f(x + δ))` with one draw `δ ~ N(0, σ²I)`.
pub fn consistency_loss<F>(model_fn: F, x: &Mat, sigma: f64, rng: &mut RngStream) -> Result<f64>
where
    F: Fn(&Mat) -> Mat,
{
    if sigma < 0.0 {
        return Err(Error::input("consistency sigma must be non-negative"));
    }
    let delta = rng.normal_matrix(x.nrows(), x.ncols());
    let perturbed = x + &(delta * sigma);
    let (a, b) = (model_fn(x), model_fn(&perturbed));
    if a.dim() != b.dim() || a.is_empty() {
        return Err(Error::input("model output shape changed under perturbation"));
    }
    let sq: f64 = a.iter().zip(b.iter()).map(|(p, q)| (p - q) * (p - q)).sum();
    Ok(sq / a.len() as f64)
}
