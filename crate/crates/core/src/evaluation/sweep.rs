use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::protocol::{EvalProtocol, Splits};
use super::utility::{utility_eval, UtilityReport};
use crate::autoencoder::{train_vae, VaeTrainConfig};
use crate::diffusion::{fit_generator, DiffusionTrainConfig, GeneratorBundle};
use crate::error::Result;
use crate::numerics::RngStream;

/// The four alignment weights of the enhanced objectives.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AlignmentWeights {
    pub ae_mmd: f64,
    pub ae_consistency: f64,
    pub diff_mmd: f64,
    pub diff_consistency: f64,
}

impl AlignmentWeights {
    pub const fn new(ae_mmd: f64, ae_consistency: f64, diff_mmd: f64, diff_consistency: f64) -> Self {
        AlignmentWeights {
            ae_mmd,
            ae_consistency,
            diff_mmd,
            diff_consistency,
        }
    }

    pub fn is_zero(&self) -> bool {
        *self == AlignmentWeights::default()
    }
}

/// Nine points: no alignment; each weight alone at 0.1; the two autoencoder
/// weights together and the two diffusion weights together at 0.1; all four
/// at 0.1 (light) and at 0.5 (moderate).
pub fn default_grid() -> Vec<AlignmentWeights> {
    vec![
        AlignmentWeights::new(0.0, 0.0, 0.0, 0.0),
        AlignmentWeights::new(0.1, 0.0, 0.0, 0.0),
        AlignmentWeights::new(0.0, 0.1, 0.0, 0.0),
        AlignmentWeights::new(0.0, 0.0, 0.1, 0.0),
        AlignmentWeights::new(0.0, 0.0, 0.0, 0.1),
        AlignmentWeights::new(0.1, 0.1, 0.0, 0.0),
        AlignmentWeights::new(0.0, 0.0, 0.1, 0.1),
        AlignmentWeights::new(0.1, 0.1, 0.1, 0.1),
        AlignmentWeights::new(0.5, 0.5, 0.5, 0.5),
    ]
}

/// Both training phases' settings.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct GeneratorConfig {
    pub vae: VaeTrainConfig,
    pub diffusion: DiffusionTrainConfig,
}

impl GeneratorConfig {
    pub fn weights(&self) -> AlignmentWeights {
        AlignmentWeights::new(
            self.vae.loss.lambda_mmd,
            self.vae.loss.lambda_cons,
            self.diffusion.loss.lambda_mmd,
            self.diffusion.loss.lambda_cons,
        )
    }

    pub fn with_weights(&self, w: AlignmentWeights) -> Self {
        let mut out = self.clone();
        out.vae.loss.lambda_mmd = w.ae_mmd;
        out.vae.loss.lambda_cons = w.ae_consistency;
        out.diffusion.loss.lambda_mmd = w.diff_mmd;
        out.diffusion.loss.lambda_cons = w.diff_consistency;
        out
    }
}

/// Phase 1 then phase 2 on a normalized training split.
pub fn train_generator(train: &crate::data::Cohort, cfg: &GeneratorConfig, rng: &RngStream) -> Result<GeneratorBundle> {
    let (vae, _) = train_vae(train, &cfg.vae, &rng.child("vae"))?;
    let (mut bundle, _) = fit_generator(&vae, train, &cfg.diffusion, &rng.child("diffusion"))?;
    bundle.config_hash = crate::checkpoint::config_hash(cfg);
    Ok(bundle)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    /// Position in the grid.
    pub index: usize,
    /// 1-based rank, `None` for configurations without both gaps.
    pub rank: Option<usize>,
    pub weights: AlignmentWeights,
    pub report: Option<UtilityReport>,
    pub error: Option<String>,
}

/// Sort key: Δ_TRTS, then Δ_TSTR, then grid position.
fn rank_key(e: &SweepEntry) -> Option<(f64, f64)> {
    let r = e.report.as_ref()?;
    Some((r.delta_trts?.mean, r.delta_tstr?.mean))
}

/// Rank entries in place (ascending Δ_TRTS, Δ_TSTR tiebreak) and return them
/// in rank order; unranked entries follow in grid order.
pub fn rank_entries(mut entries: Vec<SweepEntry>) -> Vec<SweepEntry> {
    entries.sort_by(|a, b| match (rank_key(a), rank_key(b)) {
        (Some(x), Some(y)) => x.0.total_cmp(&y.0).then(x.1.total_cmp(&y.1)).then(a.index.cmp(&b.index)),
        (Some(_), None) => std::cmp::Ordering::Less,
        (None, Some(_)) => std::cmp::Ordering::Greater,
        (None, None) => a.index.cmp(&b.index),
    });
    let mut next = 1;
    for e in &mut entries {
        e.rank = rank_key(e).map(|_| {
            next += 1;
            next - 1
        });
    }
    entries
}

/// Train one generator per grid point and run both utility workflows on it.
/// Every configuration uses the same generator and evaluation seeds, so the
/// comparison between grid points is paired. Failures are recorded per entry.
pub fn weight_sweep(
    splits: Splits<'_>,
    base: &GeneratorConfig,
    grid: &[AlignmentWeights],
    protocol: &EvalProtocol,
    rng: &RngStream,
) -> Result<Vec<SweepEntry>> {
    protocol.validate()?;
    splits.validate()?;
    let entries: Vec<SweepEntry> = grid
        .par_iter()
        .enumerate()
        .map(|(index, &weights)| {
            let outcome = train_generator(splits.train, &base.with_weights(weights), &rng.child("generator"))
                .and_then(|bundle| utility_eval(&bundle, splits, protocol, &rng.child("utility")));
            match outcome {
                Ok((report, _)) => SweepEntry {
                    index,
                    rank: None,
                    weights,
                    report: Some(report),
                    error: None,
                },
                Err(e) => SweepEntry {
                    index,
                    rank: None,
                    weights,
                    report: None,
                    error: Some(format!("{}: {e}", e.kind())),
                },
            }
        })
        .collect();
    Ok(rank_entries(entries))
}
