//! Sequence β-VAE: a GRU encoder to per-timestep Gaussian latents and a GRU
//! decoder with a continuous-value head and a mask-logit head.

mod loss;
mod model;
mod train;

pub use loss::{
    consistency_loss, kld_loss, recon_loss, vae_loss_and_grads, vae_loss_base, vae_loss_enhanced, VaeBatch,
    VaeLossConfig, VaeLossTerms, BCE_EPS,
};
pub use model::{reparameterize, EncodedVars, LatentSeq, VaeArch, VaeParams, LOGVAR_MAX, LOGVAR_MIN};
pub use train::{encode_cohort, train_vae, VaeEpochLog, VaeTrainConfig, VaeTrainLog};

pub const CHECKPOINT_KIND: &str = "vae";
