pub mod autodiff;
pub mod autoencoder;
pub mod checkpoint;
pub mod cli;
pub mod config;
pub mod data;
pub mod diffusion;
pub mod downstream;
pub mod error;
pub mod evaluation;
pub mod numerics;
pub mod training;

pub use error::{Error, Result};
