use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Gru, Linear, Mat, ParamSet, Var};
use crate::data::batch::step_inputs;
use crate::data::PatientRecord;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

pub const LOGVAR_MIN: f64 = -10.0;
pub const LOGVAR_MAX: f64 = 10.0;

/// Shapes of the sequence VAE.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaeArch {
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "F")]
    pub f: usize,
    pub latent_dim: usize,
    pub enc_hidden: usize,
    pub dec_hidden: usize,
}

/// Per-timestep posterior of one record.
#[derive(Clone, Debug, PartialEq)]
pub struct LatentSeq {
    pub z: Mat,
    pub mu: Mat,
    pub logvar: Mat,
}

/// GRU encoder, Gaussian latent heads, GRU decoder with value and mask heads.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VaeParams {
    pub arch: VaeArch,
    pub encoder: Gru,
    pub mu_head: Linear,
    pub logvar_head: Linear,
    pub decoder: Gru,
    pub cont_head: Linear,
    pub mask_head: Linear,
    pub params: ParamSet,
}

/// Graph handles produced by [`VaeParams::encode_graph`], one per step.
pub struct EncodedVars {
    pub mu: Vec<Var>,
    pub logvar: Vec<Var>,
}

impl VaeParams {
    pub fn new(arch: VaeArch, rng: &mut RngStream) -> Result<Self> {
        if arch.t == 0 || arch.f == 0 || arch.latent_dim == 0 || arch.enc_hidden == 0 || arch.dec_hidden == 0 {
            return Err(Error::Config(format!("VAE dimensions must be positive: {arch:?}")));
        }
        let mut ps = ParamSet::new();
        let encoder = Gru::new(&mut ps, "encoder", 2 * arch.f, arch.enc_hidden, rng);
        let mu_head = Linear::new(&mut ps, "mu_head", arch.enc_hidden, arch.latent_dim, rng);
        let logvar_head = Linear::new(&mut ps, "logvar_head", arch.enc_hidden, arch.latent_dim, rng);
        let decoder = Gru::new(&mut ps, "decoder", arch.latent_dim, arch.dec_hidden, rng);
        let cont_head = Linear::new(&mut ps, "cont_head", arch.dec_hidden, arch.f, rng);
        let mask_head = Linear::new(&mut ps, "mask_head", arch.dec_hidden, arch.f, rng);
        Ok(VaeParams {
            arch,
            encoder,
            mu_head,
            logvar_head,
            decoder,
            cont_head,
            mask_head,
            params: ps,
        })
    }

    /// Check that every tensor has the shape the architecture implies.
    pub fn validate(&self) -> Result<()> {
        let fresh = VaeParams::new(self.arch, &mut RngStream::new(0))?;
        let same_layout = fresh.encoder == self.encoder
            && fresh.mu_head == self.mu_head
            && fresh.logvar_head == self.logvar_head
            && fresh.decoder == self.decoder
            && fresh.cont_head == self.cont_head
            && fresh.mask_head == self.mask_head
            && fresh.params.same_layout(&self.params);
        if !same_layout {
            return Err(Error::Schema {
                location: "VAE parameters".into(),
                detail: "tensor layout does not match the declared architecture".into(),
            });
        }
        if !self.params.is_finite() {
            return Err(Error::numeric("VAE parameters", "non-finite weight"));
        }
        Ok(())
    }

    fn check_record(&self, r: &PatientRecord) -> Result<()> {
        if r.values.dim() != (self.arch.t, self.arch.f) {
            return Err(Error::input(format!(
                "record {} is {:?}, VAE expects {}x{}",
                r.id,
                r.values.dim(),
                self.arch.t,
                self.arch.f
            )));
        }
        Ok(())
    }

    /// Encoder over `T` inputs of shape `B×2F`; logvar is clamped.
    pub fn encode_graph(&self, g: &mut Graph, vars: &[Var], inputs: &[Var]) -> EncodedVars {
        let hs = self.encoder.run(g, vars, inputs, false);
        let mut mu = Vec::with_capacity(hs.len());
        let mut logvar = Vec::with_capacity(hs.len());
        for h in hs {
            mu.push(self.mu_head.forward(g, vars, h));
            let lv = self.logvar_head.forward(g, vars, h);
            logvar.push(g.clamp(lv, LOGVAR_MIN, LOGVAR_MAX));
        }
        EncodedVars { mu, logvar }
    }

    /// Decoder over `T` latents of shape `B×d`; returns value predictions and
    /// mask logits per step.
    pub fn decode_graph(&self, g: &mut Graph, vars: &[Var], z: &[Var]) -> (Vec<Var>, Vec<Var>) {
        let hs = self.decoder.run(g, vars, z, false);
        let cont = hs.iter().map(|&h| self.cont_head.forward(g, vars, h)).collect();
        let logits = hs.iter().map(|&h| self.mask_head.forward(g, vars, h)).collect();
        (cont, logits)
    }

    /// Posterior mean and clamped log-variance (each `T×d`) for a batch.
    pub fn encode_batch(&self, records: &[&PatientRecord]) -> Result<Vec<(Mat, Mat)>> {
        if records.is_empty() {
            return Ok(Vec::new());
        }
        for r in records {
            self.check_record(r)?;
        }
        let mut g = Graph::new();
        let vars = self.params.attach_const(&mut g);
        let inputs: Vec<Var> = step_inputs(records).into_iter().map(|m| g.constant(m)).collect();
        let enc = self.encode_graph(&mut g, &vars, &inputs);
        let d = self.arch.latent_dim;
        Ok((0..records.len())
            .map(|b| {
                let gather = |steps: &[Var]| {
                    Array2::from_shape_fn((self.arch.t, d), |(t, k)| g.value(steps[t])[[b, k]])
                };
                (gather(&enc.mu), gather(&enc.logvar))
            })
            .collect())
    }

    pub fn encode(&self, record: &PatientRecord) -> Result<(Mat, Mat)> {
        Ok(self.encode_batch(&[record])?.remove(0))
    }

    /// Decode a batch of `T×d` latents into `(values T×F, mask_logits T×F)`.
    pub fn decode_batch(&self, zs: &[Mat]) -> Result<Vec<(Mat, Mat)>> {
        if zs.is_empty() {
            return Ok(Vec::new());
        }
        let (t_len, d) = (self.arch.t, self.arch.latent_dim);
        if let Some(z) = zs.iter().find(|z| z.dim() != (t_len, d)) {
            return Err(Error::input(format!("latent is {:?}, VAE expects {t_len}x{d}", z.dim())));
        }
        let mut g = Graph::new();
        let vars = self.params.attach_const(&mut g);
        let steps: Vec<Var> = (0..t_len)
            .map(|t| g.constant(Array2::from_shape_fn((zs.len(), d), |(b, k)| zs[b][[t, k]])))
            .collect();
        let (cont, logits) = self.decode_graph(&mut g, &vars, &steps);
        let f = self.arch.f;
        Ok((0..zs.len())
            .map(|b| {
                let gather = |steps: &[Var]| Array2::from_shape_fn((t_len, f), |(t, j)| g.value(steps[t])[[b, j]]);
                (gather(&cont), gather(&logits))
            })
            .collect())
    }

    pub fn decode(&self, z: &Mat) -> Result<(Mat, Mat)> {
        Ok(self.decode_batch(std::slice::from_ref(z))?.remove(0))
    }

    /// Encode and draw one reparameterized latent.
    pub fn posterior(&self, record: &PatientRecord, rng: &mut RngStream) -> Result<LatentSeq> {
        let (mu, logvar) = self.encode(record)?;
        let noise = rng.normal_matrix(mu.nrows(), mu.ncols());
        let z = reparameterize(&mu, &logvar, &noise)?;
        Ok(LatentSeq { z, mu, logvar })
    }
}

/// `z = mu + exp(logvar / 2) ⊙ noise`.
pub fn reparameterize(mu: &Mat, logvar: &Mat, noise: &Mat) -> Result<Mat> {
    if mu.dim() != logvar.dim() || mu.dim() != noise.dim() {
        return Err(Error::input(format!(
            "reparameterize shapes differ: mu {:?}, logvar {:?}, noise {:?}",
            mu.dim(),
            logvar.dim(),
            noise.dim()
        )));
    }
    let mut z = mu.clone();
    ndarray::Zip::from(&mut z)
        .and(logvar)
        .and(noise)
        .for_each(|z, &lv, &n| *z += (0.5 * lv).exp() * n);
    Ok(z)
}
