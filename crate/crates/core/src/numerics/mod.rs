//! Deterministic numeric primitives shared by the rest of the crate.

mod auroc;
mod fdiff;
mod kernel;
mod rng;
mod stats;

pub use auroc::auroc;
pub use fdiff::{finite_diff_grad, max_relative_error};
pub use kernel::{median_bandwidth, mmd_biased, rbf_kernel};
pub(crate) use kernel::{mmd_unchecked, rbf_unchecked};
pub use rng::RngStream;
pub use stats::{mean, mean_ci95, t_quantile_975, ConfidenceInterval};
