use serde::{Deserialize, Serialize};

use crate::autodiff::Mat;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScheduleKind {
    Linear,
}

/// Discrete DDPM variance schedule, indexed `0..steps`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NoiseSchedule {
    pub kind: ScheduleKind,
    pub beta: Vec<f64>,
    pub alpha: Vec<f64>,
    pub alpha_bar: Vec<f64>,
}

pub fn make_schedule(steps: usize, kind: ScheduleKind, beta_min: f64, beta_max: f64) -> Result<NoiseSchedule> {
    if steps == 0 {
        return Err(Error::Config("diffusion needs at least one step".into()));
    }
    if !(0.0 < beta_min && beta_min <= beta_max && beta_max < 1.0) {
        return Err(Error::Config(format!(
            "noise schedule needs 0 < beta_min <= beta_max < 1, got [{beta_min}, {beta_max}]"
        )));
    }
    let beta: Vec<f64> = match kind {
        ScheduleKind::Linear if steps == 1 => vec![beta_min],
        ScheduleKind::Linear => (0..steps)
            .map(|i| beta_min + (beta_max - beta_min) * i as f64 / (steps - 1) as f64)
            .collect(),
    };
    let alpha: Vec<f64> = beta.iter().map(|b| 1.0 - b).collect();
    let alpha_bar = alpha
        .iter()
        .scan(1.0, |acc, a| {
            *acc *= a;
            Some(*acc)
        })
        .collect();
    Ok(NoiseSchedule {
        kind,
        beta,
        alpha,
        alpha_bar,
    })
}

impl NoiseSchedule {
    pub fn steps(&self) -> usize {
        self.beta.len()
    }

    /// Variance of the reverse posterior `q(z_{t-1} | z_t, z_0)`; zero at `t = 0`.
    pub fn posterior_variance(&self, t: usize) -> f64 {
        if t == 0 {
            0.0
        } else {
            self.beta[t] * (1.0 - self.alpha_bar[t - 1]) / (1.0 - self.alpha_bar[t])
        }
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.beta.len();
        let consistent = n > 0
            && self.alpha.len() == n
            && self.alpha_bar.len() == n
            && self.beta.iter().all(|b| *b > 0.0 && *b < 1.0)
            && self.alpha_bar.windows(2).all(|w| w[1] < w[0]);
        if consistent {
            Ok(())
        } else {
            Err(Error::Schema {
                location: "noise schedule".into(),
                detail: "inconsistent beta/alpha/alpha_bar arrays".into(),
            })
        }
    }
}

/// `z_t = √ᾱ_t · z0 + √(1 − ᾱ_t) · eps`.
pub fn q_sample(z0: &Mat, t: usize, eps: &Mat, schedule: &NoiseSchedule) -> Result<Mat> {
    if t >= schedule.steps() {
        return Err(Error::input(format!("diffusion step {t} outside 0..{}", schedule.steps())));
    }
    if z0.dim() != eps.dim() {
        return Err(Error::input("q_sample: z0 and eps shapes differ"));
    }
    let ab = schedule.alpha_bar[t];
    Ok(z0 * ab.sqrt() + eps * (1.0 - ab).sqrt())
}
