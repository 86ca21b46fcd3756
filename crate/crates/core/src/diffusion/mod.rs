//! Conditional latent diffusion: schedule, denoiser, losses, training,
//! sampling and the generator bundle.

mod bundle;
mod denoiser;
mod loss;
mod rejection;
mod schedule;

#[cfg(test)]
mod tests;

pub use bundle::{
    decode_records, fit_generator, generate, generate_normalized, sample_latent, sample_latents, train_diffusion,
    DiffusionEpochLog, DiffusionTrainConfig, DiffusionTrainLog, GeneratorBundle, LatentStats, BUNDLE_KIND,
};
pub use denoiser::{
    cfg_eps, condition_encoding, denoiser_forward, timestep_embedding, DenoiserArch, DenoiserParams, COND_DIM,
};
pub use loss::{
    diffusion_loss_and_grads, diffusion_loss_base, diffusion_loss_enhanced, epsilon_mse, DiffusionLossConfig,
    DiffusionLossTerms,
};
pub use rejection::{rejection_sample_conditional, Accepted};
pub use schedule::{make_schedule, q_sample, NoiseSchedule, ScheduleKind};
