use std::f64::consts::LN_10;

use ndarray::{s, Array2};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Gru, Linear, Mat, ParamSet, Var};
use crate::data::Condition;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

/// Condition one-hot plus one slot for the null (unconditional) token.
pub const COND_DIM: usize = Condition::ONE_HOT_DIM + 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserArch {
    #[serde(rename = "T")]
    pub t: usize,
    pub latent_dim: usize,
    pub hidden: usize,
    pub time_embed_dim: usize,
}

impl DenoiserArch {
    pub fn input_dim(&self) -> usize {
        self.latent_dim + self.time_embed_dim + COND_DIM
    }

    pub fn flat_dim(&self) -> usize {
        self.t * self.latent_dim
    }
}

/// Bidirectional GRU noise predictor `ε_θ(z_t, t, c)`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DenoiserParams {
    pub arch: DenoiserArch,
    pub forward_rnn: Gru,
    pub backward_rnn: Gru,
    pub head: Linear,
    pub params: ParamSet,
}

/// Sinusoidal features of the diffusion step: `[sin(t ω_k), cos(t ω_k)]` with
/// `ω_k = 10000^(-k / (dim/2))`.
pub fn timestep_embedding(t: usize, dim: usize) -> Vec<f64> {
    let half = dim / 2;
    let mut out = vec![0.0; dim];
    for k in 0..half {
        let freq = (-(4.0 * LN_10) * k as f64 / half as f64).exp();
        let angle = t as f64 * freq;
        out[2 * k] = angle.sin();
        out[2 * k + 1] = angle.cos();
    }
    out
}

/// Condition encoding; `None` is the null token.
pub fn condition_encoding(cond: Option<&Condition>, out: &mut [f64]) {
    out[..COND_DIM].fill(0.0);
    match cond {
        Some(c) => c.write_one_hot(out),
        None => out[COND_DIM - 1] = 1.0,
    }
}

impl DenoiserParams {
    pub fn new(arch: DenoiserArch, rng: &mut RngStream) -> Result<Self> {
        if arch.t == 0 || arch.latent_dim == 0 || arch.hidden == 0 {
            return Err(Error::Config(format!("denoiser dimensions must be positive: {arch:?}")));
        }
        if arch.time_embed_dim % 2 != 0 {
            return Err(Error::Config("time embedding dimension must be even".into()));
        }
        let mut ps = ParamSet::new();
        let forward_rnn = Gru::new(&mut ps, "denoiser.forward", arch.input_dim(), arch.hidden, rng);
        let backward_rnn = Gru::new(&mut ps, "denoiser.backward", arch.input_dim(), arch.hidden, rng);
        let head = Linear::new(&mut ps, "denoiser.head", 2 * arch.hidden, arch.latent_dim, rng);
        Ok(DenoiserParams {
            arch,
            forward_rnn,
            backward_rnn,
            head,
            params: ps,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fresh = DenoiserParams::new(self.arch, &mut RngStream::new(0))?;
        if fresh.forward_rnn != self.forward_rnn
            || fresh.backward_rnn != self.backward_rnn
            || fresh.head != self.head
            || !fresh.params.same_layout(&self.params)
        {
            return Err(Error::Schema {
                location: "denoiser parameters".into(),
                detail: "tensor layout does not match the declared architecture".into(),
            });
        }
        if !self.params.is_finite() {
            return Err(Error::numeric("denoiser parameters", "non-finite weight"));
        }
        Ok(())
    }

    /// Per-row step embedding and condition encoding, `B × (E + COND_DIM)`.
    pub fn aux_inputs(&self, steps: &[usize], conds: &[Option<Condition>]) -> Mat {
        let e = self.arch.time_embed_dim;
        let mut m = Array2::zeros((steps.len(), e + COND_DIM));
        for (b, (&t, c)) in steps.iter().zip(conds).enumerate() {
            let mut row = m.row_mut(b);
            let row = row.as_slice_mut().expect("standard layout");
            row[..e].copy_from_slice(&timestep_embedding(t, e));
            condition_encoding(c.as_ref(), &mut row[e..]);
        }
        m
    }

    /// Noise prediction for a `B × (T·d)` batch of noisy latents.
    pub fn eps_graph(&self, g: &mut Graph, vars: &[Var], z: Var, aux: Var) -> Var {
        let d = self.arch.latent_dim;
        let inputs: Vec<Var> = (0..self.arch.t)
            .map(|i| {
                let zi = g.slice_cols(z, i * d, (i + 1) * d);
                g.concat_cols(&[zi, aux])
            })
            .collect();
        let hf = self.forward_rnn.run(g, vars, &inputs, false);
        let hb = self.backward_rnn.run(g, vars, &inputs, true);
        let outs: Vec<Var> = hf
            .iter()
            .zip(&hb)
            .map(|(&f, &b)| {
                let h = g.concat_cols(&[f, b]);
                self.head.forward(g, vars, h)
            })
            .collect();
        g.concat_cols(&outs)
    }

    /// Batched prediction without gradient tracking.
    pub fn predict(&self, z: &Mat, steps: &[usize], conds: &[Option<Condition>]) -> Result<Mat> {
        if z.ncols() != self.arch.flat_dim() || z.nrows() != steps.len() || steps.len() != conds.len() {
            return Err(Error::input(format!(
                "denoiser batch is {:?} with {} steps and {} conditions; expects rows × {}",
                z.dim(),
                steps.len(),
                conds.len(),
                self.arch.flat_dim()
            )));
        }
        let mut g = Graph::new();
        let vars = self.params.attach_const(&mut g);
        let zv = g.constant(z.clone());
        let aux = g.constant(self.aux_inputs(steps, conds));
        let out = self.eps_graph(&mut g, &vars, zv, aux);
        Ok(g.value(out).clone())
    }
}

pub(crate) fn flatten_latent(z: &Mat) -> Vec<f64> {
    z.as_standard_layout().iter().copied().collect()
}

pub(crate) fn stack_latents(zs: &[Mat], flat_dim: usize) -> Mat {
    let mut m = Array2::zeros((zs.len(), flat_dim));
    for (b, z) in zs.iter().enumerate() {
        m.row_mut(b).assign(&ndarray::Array1::from(flatten_latent(z)));
    }
    m
}

pub(crate) fn unstack_latent(m: &Mat, row: usize, t: usize, d: usize) -> Mat {
    m.slice(s![row, ..]).to_owned().into_shape_with_order((t, d)).expect("row is T·d")
}

/// `ε_θ(z_t, t, c)` for one `T×d` latent.
pub fn denoiser_forward(z_t: &Mat, t: usize, cond: Option<&Condition>, params: &DenoiserParams) -> Result<Mat> {
    let a = params.arch;
    if z_t.dim() != (a.t, a.latent_dim) {
        return Err(Error::input(format!(
            "latent is {:?}, denoiser expects {}x{}",
            z_t.dim(),
            a.t,
            a.latent_dim
        )));
    }
    let flat = stack_latents(std::slice::from_ref(z_t), a.flat_dim());
    let out = params.predict(&flat, &[t], &[cond.copied()])?;
    Ok(unstack_latent(&out, 0, a.t, a.latent_dim))
}

/// Classifier-free guidance `(1 + w)·ε_cond − w·ε_null`; `w = 0` returns the
/// conditional prediction without evaluating the null branch.
pub fn cfg_eps(z_t: &Mat, t: usize, cond: &Condition, w: f64, params: &DenoiserParams) -> Result<Mat> {
    let eps_c = denoiser_forward(z_t, t, Some(cond), params)?;
    if w == 0.0 {
        return Ok(eps_c);
    }
    let eps_n = denoiser_forward(z_t, t, None, params)?;
    Ok(guide(&eps_c, &eps_n, w))
}

pub(crate) fn guide(eps_c: &Mat, eps_n: &Mat, w: f64) -> Mat {
    eps_c * (1.0 + w) - eps_n * w
}
