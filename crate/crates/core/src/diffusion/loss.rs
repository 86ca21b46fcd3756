use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::denoiser::DenoiserParams;
use super::schedule::NoiseSchedule;
use crate::autodiff::{Graph, Mat, Var};
use crate::data::Condition;
use crate::error::{Error, Result};
use crate::numerics::{median_bandwidth, RngStream};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DiffusionLossConfig {
    pub lambda_mmd: f64,
    pub lambda_cons: f64,
    /// Standard deviation of the perturbation applied to `z_t`.
    pub cons_sigma: f64,
    /// Probability of replacing a condition with the null token.
    pub p_uncond: f64,
    pub mmd_bandwidth: Option<f64>,
}

impl Default for DiffusionLossConfig {
    fn default() -> Self {
        DiffusionLossConfig {
            lambda_mmd: 0.0,
            lambda_cons: 0.0,
            cons_sigma: 0.1,
            p_uncond: 0.1,
            mmd_bandwidth: None,
        }
    }
}

impl DiffusionLossConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lambda_mmd >= 0.0
            && self.lambda_cons >= 0.0
            && self.cons_sigma >= 0.0
            && (0.0..=1.0).contains(&self.p_uncond)
            && self.mmd_bandwidth.map_or(true, |b| b > 0.0 && b.is_finite());
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("invalid diffusion loss settings {self:?}")))
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DiffusionLossTerms {
    /// Mean squared noise-prediction error.
    pub base: f64,
    pub mmd: Option<f64>,
    pub consistency: Option<f64>,
    pub total: f64,
    /// Number of rows whose condition was replaced by the null token.
    pub null_conditions: usize,
}

/// Mean squared error between predicted and true noise.
pub fn epsilon_mse(eps_hat: &Mat, eps: &Mat) -> f64 {
    let sq: f64 = eps_hat.iter().zip(eps.iter()).map(|(a, b)| (a - b) * (a - b)).sum();
    sq / eps.len() as f64
}

fn rows(m: &Mat) -> Vec<Vec<f64>> {
    m.rows().into_iter().map(|r| r.to_vec()).collect()
}

/// Loss graph for a `B × (T·d)` batch of clean latents. Draw order per batch:
/// for each row its step `t` and null-drop flag, then the noise matrix, then
/// the consistency perturbation when that term is active.
pub(crate) fn build_diffusion_loss(
    den: &DenoiserParams,
    schedule: &NoiseSchedule,
    g: &mut Graph,
    vars: &[Var],
    z0: &Mat,
    conds: &[Condition],
    cfg: &DiffusionLossConfig,
    rng: &mut RngStream,
) -> Result<(Var, DiffusionLossTerms)> {
    cfg.validate()?;
    let b = z0.nrows();
    if b == 0 || conds.len() != b || z0.ncols() != den.arch.flat_dim() {
        return Err(Error::input(format!(
            "diffusion batch is {:?} with {} conditions; expects rows × {}",
            z0.dim(),
            conds.len(),
            den.arch.flat_dim()
        )));
    }
    if cfg.lambda_mmd > 0.0 && b < 2 {
        return Err(Error::input("MMD term needs a batch of at least 2 latents"));
    }
    let mut steps = Vec::with_capacity(b);
    let mut used = Vec::with_capacity(b);
    let mut null_conditions = 0;
    for c in conds {
        steps.push(rng.below(schedule.steps()));
        let drop = cfg.p_uncond > 0.0 && rng.bernoulli(cfg.p_uncond);
        null_conditions += usize::from(drop);
        used.push(if drop { None } else { Some(*c) });
    }
    let eps = rng.normal_matrix(b, z0.ncols());
    let sqrt_ab: Vec<f64> = steps.iter().map(|&t| schedule.alpha_bar[t].sqrt()).collect();
    let sqrt_1m: Vec<f64> = steps.iter().map(|&t| (1.0 - schedule.alpha_bar[t]).sqrt()).collect();
    let mut z_t = z0.clone();
    for (i, mut row) in z_t.rows_mut().into_iter().enumerate() {
        row *= sqrt_ab[i];
        row.scaled_add(sqrt_1m[i], &eps.row(i));
    }

    let aux = g.constant(den.aux_inputs(&steps, &used));
    let zt_var = g.constant(z_t.clone());
    let eps_hat = den.eps_graph(g, vars, zt_var, aux);
    let cells = (b * z0.ncols()) as f64;
    let sq = g.sq_err_sum(eps_hat, eps);
    let base = g.scale(sq, 1.0 / cells);
    let mut total = base;
    let mut terms = DiffusionLossTerms {
        base: g.scalar(base),
        null_conditions,
        ..Default::default()
    };

    if cfg.lambda_mmd > 0.0 {
        // ẑ0 = (z_t − √(1−ᾱ) ε̂) / √ᾱ, row by row.
        let inv: Arc<Vec<f64>> = Arc::new(sqrt_ab.iter().map(|s| 1.0 / s).collect());
        let ratio: Arc<Vec<f64>> = Arc::new(sqrt_1m.iter().zip(&sqrt_ab).map(|(a, s)| a / s).collect());
        let scaled_zt = g.row_scale(zt_var, inv);
        let scaled_eps = g.row_scale(eps_hat, ratio);
        let z0_hat = g.sub(scaled_zt, scaled_eps);
        let bw = match cfg.mmd_bandwidth {
            Some(bw) => bw,
            None => median_bandwidth(&rows(g.value(z0_hat)), &rows(z0)),
        };
        let real = g.constant(z0.clone());
        let mmd = g.mmd(z0_hat, real, bw);
        terms.mmd = Some(g.scalar(mmd));
        let w = g.scale(mmd, cfg.lambda_mmd);
        total = g.add(total, w);
    }

    if cfg.lambda_cons > 0.0 {
        let delta = rng.normal_matrix(b, z0.ncols());
        let perturbed = g.constant(&z_t + &(delta * cfg.cons_sigma));
        let eps_hat2 = den.eps_graph(g, vars, perturbed, aux);
        let diff = g.sq_diff_sum(eps_hat, eps_hat2);
        let cons = g.scale(diff, 1.0 / cells);
        terms.consistency = Some(g.scalar(cons));
        let w = g.scale(cons, cfg.lambda_cons);
        total = g.add(total, w);
    }

    terms.total = g.scalar(total);
    Ok((total, terms))
}

/// `L_Diffusion + λ_mmd·MMD(ẑ0, z0) + λ_cons·consistency` for one batch of
/// flattened clean latents.
pub fn diffusion_loss_enhanced(
    den: &DenoiserParams,
    schedule: &NoiseSchedule,
    z0: &Mat,
    conds: &[Condition],
    cfg: &DiffusionLossConfig,
    rng: &mut RngStream,
) -> Result<DiffusionLossTerms> {
    let mut g = Graph::new();
    let vars = den.params.attach_const(&mut g);
    build_diffusion_loss(den, schedule, &mut g, &vars, z0, conds, cfg, rng).map(|(_, t)| t)
}

/// Base DDPM objective `E‖ε − ε_θ(z_t, t, c)‖²` with the same draws as the
/// enhanced loss.
pub fn diffusion_loss_base(
    den: &DenoiserParams,
    schedule: &NoiseSchedule,
    z0: &Mat,
    conds: &[Condition],
    p_uncond: f64,
    rng: &mut RngStream,
) -> Result<f64> {
    let cfg = DiffusionLossConfig {
        lambda_mmd: 0.0,
        lambda_cons: 0.0,
        p_uncond,
        ..DiffusionLossConfig::default()
    };
    diffusion_loss_enhanced(den, schedule, z0, conds, &cfg, rng).map(|t| t.total)
}

pub fn diffusion_loss_and_grads(
    den: &DenoiserParams,
    schedule: &NoiseSchedule,
    z0: &Mat,
    conds: &[Condition],
    cfg: &DiffusionLossConfig,
    rng: &mut RngStream,
) -> Result<(DiffusionLossTerms, Vec<Mat>)> {
    let mut g = Graph::new();
    let vars = den.params.attach(&mut g);
    let (total, terms) = build_diffusion_loss(den, schedule, &mut g, &vars, z0, conds, cfg, rng)?;
    let grads = g.backward(total);
    Ok((terms, den.params.collect_grads(&grads, &vars)))
}
